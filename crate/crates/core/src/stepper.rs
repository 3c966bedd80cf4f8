//! Fixed-step RK4 for the driven cavity
//! `da/dt = -(κ/2 + i(χ + 4ζ|a|²)) a + √κ a_in`,
//! shared by the linear ODE propagator and the nonlinear simulator.
//!
//! The sampled input is read through a causal cubic: on the interval between
//! samples `n-1` and `n` it is the Lagrange polynomial through samples
//! `n-3..=n`, with samples before the start of the waveform taken as zero.
//! The convolution propagator integrates the same interpolant exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::StateBranch;

/// Largest allowed `rate · h` for one internal RK4 step.
pub(crate) const STEP_BOUND: f64 = 0.1;

/// Polynomial coefficients (ascending powers of `u`) of the cubic Lagrange
/// basis on nodes `u = -2, -1, 0, 1`.
pub(crate) const CUBIC_BASIS: [[f64; 4]; 4] = [
    [0.0, 1.0 / 6.0, 0.0, -1.0 / 6.0],
    [0.0, -1.0, 0.5, 0.5],
    [1.0, 0.5, -1.0, -0.5],
    [0.0, 1.0 / 3.0, 0.5, 1.0 / 6.0],
];

pub(crate) fn cubic_weights(u: f64) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (wi, c) in w.iter_mut().zip(CUBIC_BASIS.iter()) {
        *wi = c[0] + u * (c[1] + u * (c[2] + u * c[3]));
    }
    w
}

/// The four samples feeding the interpolant on interval `n` (`n >= 1`).
#[inline]
pub(crate) fn stencil(x: &[Complex64], n: usize) -> [Complex64; 4] {
    let at = |i: isize| -> Complex64 {
        if i < 0 {
            Complex64::new(0.0, 0.0)
        } else {
            x[i as usize]
        }
    };
    let n = n as isize;
    [at(n - 3), at(n - 2), at(n - 1), at(n)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coeffs {
    pub half_kappa: f64,
    pub chi: f64,
    pub zeta: f64,
    pub sqrt_kappa: f64,
}

impl Coeffs {
    pub fn new(branch: &StateBranch, kappa: f64) -> Self {
        Self {
            half_kappa: 0.5 * kappa,
            chi: branch.chi,
            zeta: branch.zeta,
            sqrt_kappa: kappa.sqrt(),
        }
    }

    #[inline]
    fn rhs(&self, a: Complex64, drive: Complex64) -> Complex64 {
        let shift = self.chi + 4.0 * self.zeta * a.norm_sqr();
        -Complex64::new(self.half_kappa, shift) * a + self.sqrt_kappa * drive
    }

    #[inline]
    fn rate(&self, photons: f64) -> f64 {
        self.half_kappa + self.chi.abs() + 4.0 * self.zeta.abs() * photons
    }
}

pub(crate) struct Rk4 {
    oversample: usize,
    /// Interpolation weights at every half internal step inside one coarse
    /// interval, `2·oversample + 1` entries.
    weights: Vec<[f64; 4]>,
}

impl Rk4 {
    pub fn new(oversample: usize) -> Self {
        let oversample = oversample.max(1);
        let weights = (0..=2 * oversample)
            .map(|p| cubic_weights(p as f64 / (2 * oversample) as f64))
            .collect();
        Self { oversample, weights }
    }

    /// Integrate from coarse sample `start` (field `a_start`) to the end of
    /// `input`, writing the field at each coarse sample into `out[start..]`.
    /// `coeffs_at` receives the global index of each internal step, which
    /// lets callers switch branch mid-interval.
    pub fn run(
        &self,
        input: &[Complex64],
        dt: f64,
        start: usize,
        a_start: Complex64,
        out: &mut [Complex64],
        mut coeffs_at: impl FnMut(usize) -> Coeffs,
    ) -> Result<()> {
        debug_assert_eq!(input.len(), out.len());
        let os = self.oversample;
        let h = dt / os as f64;
        let mut a = a_start;
        out[start] = a;
        for n in start + 1..input.len() {
            let s = stencil(input, n);
            let drive = |p: usize| -> Complex64 {
                let w = &self.weights[p];
                s[0] * w[0] + s[1] * w[1] + s[2] * w[2] + s[3] * w[3]
            };
            for sub in 0..os {
                let c = coeffs_at((n - 1) * os + sub);
                let rate = c.rate(a.norm_sqr());
                if rate * h > STEP_BOUND {
                    return Err(Error::GridTooCoarse {
                        dt,
                        required_dt: STEP_BOUND * os as f64 / rate,
                    });
                }
                let u0 = drive(2 * sub);
                let um = drive(2 * sub + 1);
                let u1 = drive(2 * sub + 2);
                let k1 = c.rhs(a, u0);
                let k2 = c.rhs(a + 0.5 * h * k1, um);
                let k3 = c.rhs(a + 0.5 * h * k2, um);
                let k4 = c.rhs(a + h * k3, u1);
                a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            out[n] = a;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_weights_interpolate_nodes_and_cubics() {
        assert_eq!(cubic_weights(0.0), [0.0, 0.0, 1.0, 0.0]);
        let w1 = cubic_weights(1.0);
        for (i, expect) in [0.0, 0.0, 0.0, 1.0].iter().enumerate() {
            assert!((w1[i] - expect).abs() < 1e-15);
        }
        // Exact for any cubic.
        let p = |u: f64| 2.0 - u + 0.5 * u * u - 0.25 * u * u * u;
        for &u in &[0.1, 0.37, 0.5, 0.93] {
            let w = cubic_weights(u);
            let v = w[0] * p(-2.0) + w[1] * p(-1.0) + w[2] * p(0.0) + w[3] * p(1.0);
            assert!((v - p(u)).abs() < 1e-14);
        }
    }
}
