use std::f64::consts::PI;

use num_complex::Complex64;

use crate::model::TrialFunction;

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl TrialFunction {
    /// `k`-th time derivative of `A·sinᵐ(πt/T_p)`; exactly zero outside
    /// `[0, T_p]`.
    pub fn eval(&self, t: f64, k: usize) -> Complex64 {
        self.derivatives(t, k)[k]
    }

    /// Derivatives of orders `0..=max_order` at `t`.
    ///
    /// Uses `sinᵐ x = (2i)^{-m} Σ_q C(m,q) (-1)^q e^{i(m-2q)x}`, so each
    /// derivative just multiplies term `q` by `i(m-2q)π/T_p`. The profile is
    /// real, so only the real part of the sum is kept.
    pub fn derivatives(&self, t: f64, max_order: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); max_order + 1];
        let tp = self.duration();
        if !(0.0..=tp).contains(&t) {
            return out;
        }
        let m = self.exponent();
        let prefactor = Complex64::new(0.0, 2.0).powi(-(m as i32));
        let mut profile = vec![0.0; max_order + 1];
        for q in 0..=m {
            let freq = (m as f64 - 2.0 * q as f64) * PI / tp;
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            let mut term = prefactor * sign * binomial(m, q) * Complex64::from_polar(1.0, freq * t);
            let step = Complex64::new(0.0, freq);
            for p in profile.iter_mut() {
                *p += term.re;
                term *= step;
            }
        }
        let a = self.amplitude();
        for (o, p) in out.iter_mut().zip(&profile) {
            *o = a * *p;
        }
        out
    }
}

pub fn trial_eval(tf: &TrialFunction, t: f64, k: usize) -> Complex64 {
    tf.eval(t, k)
}
