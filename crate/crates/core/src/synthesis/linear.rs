use num_complex::Complex64;

use super::pulse_grid;
use crate::error::{Error, Result};
use crate::model::{BranchSet, StateBranch, TrialFunction, Waveform};

/// `∏_j (κ/2 + iχ_j + d/dt) · κ^{-N/2}` with constant factors.
///
/// The factors commute, so the product is expanded once into
/// `Σ_k e_{N-k} d^k/dt^k` where `e_q` are the elementary symmetric
/// polynomials of the factors. Applied to the trial function this uses only
/// exact trial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorProduct {
    factors: Vec<Complex64>,
    /// `coefficients[k]` multiplies the `k`-th derivative.
    coefficients: Vec<Complex64>,
    normalization: f64,
}

impl OperatorProduct {
    pub fn new<'a>(branches: impl IntoIterator<Item = &'a StateBranch>, kappa: f64) -> Self {
        let factors: Vec<Complex64> = branches
            .into_iter()
            .map(|b| Complex64::new(0.5 * kappa, b.chi))
            .collect();
        let mut coefficients = vec![Complex64::new(1.0, 0.0)];
        for &f in &factors {
            let mut next = vec![Complex64::new(0.0, 0.0); coefficients.len() + 1];
            for (k, &c) in coefficients.iter().enumerate() {
                next[k] += f * c;
                next[k + 1] += c;
            }
            coefficients = next;
        }
        let normalization = kappa.powf(-0.5 * factors.len() as f64);
        Self {
            factors,
            coefficients,
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// `κ/2 + iχ_j` per branch.
    pub fn factors(&self) -> &[Complex64] {
        &self.factors
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Value of the product applied to `tf` at `t`.
    pub fn apply(&self, tf: &TrialFunction, t: f64) -> Complex64 {
        let d = tf.derivatives(t, self.factors.len());
        self.apply_derivatives(&d)
    }

    /// Same as [`apply`](Self::apply) from precomputed trial derivatives,
    /// optionally shifted by `offset` orders (i.e. the product applied to
    /// the `offset`-th derivative of the trial function).
    pub(crate) fn apply_derivatives(&self, d: &[Complex64]) -> Complex64 {
        self.apply_shifted(d, 0)
    }

    pub(crate) fn apply_shifted(&self, d: &[Complex64], offset: usize) -> Complex64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * d[k + offset])
            .sum::<Complex64>()
            * self.normalization
    }

    /// Time derivatives of orders `0..=max_order` of the product applied
    /// to `tf` at `t`.
    pub fn derivatives(&self, tf: &TrialFunction, t: f64, max_order: usize) -> Vec<Complex64> {
        let d = tf.derivatives(t, self.factors.len() + max_order);
        (0..=max_order).map(|p| self.apply_shifted(&d, p)).collect()
    }

    pub fn sample(&self, tf: &TrialFunction, max_dt: f64) -> Result<Waveform> {
        let (n, dt) = pulse_grid(tf.duration(), max_dt)?;
        Waveform::from_fn(n, dt, 0.0, |t| self.apply(tf, t))
    }
}

/// Input that makes the matched branch follow the trial function:
/// `a_in = (κ/2 + iχ₀ + d/dt) a_T / √κ`.
pub fn synth_single(tf: &TrialFunction, branch: &StateBranch, kappa: f64, max_dt: f64) -> Result<Waveform> {
    if tf.exponent() <= 1 {
        return Err(Error::Smoothness {
            exponent: tf.exponent(),
            branches: 1,
        });
    }
    OperatorProduct::new([branch], kappa).sample(tf, max_dt)
}

/// Input that empties the cavity at `T_p` for every branch of the set.
/// Kerr constants are ignored.
pub fn synth_multi(tf: &TrialFunction, branches: &BranchSet, kappa: f64, max_dt: f64) -> Result<Waveform> {
    tf.check_smoothness(branches.len())?;
    OperatorProduct::new(branches, kappa).sample(tf, max_dt)
}

/// Linear field of branch `label` under the multi-branch pulse:
/// `∏_{k≠j} (κ/2 + iχ_k + d/dt) a_T / κ^{(N-1)/2}`.
pub fn designed_field(
    tf: &TrialFunction,
    branches: &BranchSet,
    label: usize,
    kappa: f64,
    max_dt: f64,
) -> Result<Waveform> {
    branches.get(label)?;
    OperatorProduct::new(branches.iter().filter(|b| b.label != label), kappa).sample(tf, max_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn kappa() -> f64 {
        0.5647e6 * TAU
    }

    fn qubit() -> BranchSet {
        BranchSet::new(vec![
            StateBranch::new(0, 0.299e6 * TAU),
            StateBranch::new(1, -0.299e6 * TAU),
        ])
        .unwrap()
    }

    #[test]
    fn single_state_peak_value() {
        let tf = TrialFunction::new(Complex64::new(2.0, 0.0), 3, 1e-6).unwrap();
        let b = StateBranch::new(0, 0.299e6 * TAU);
        let w = synth_single(&tf, &b, kappa(), 1e-9).unwrap();
        let mid = w.samples()[500];
        let expect = Complex64::new(0.5 * kappa(), b.chi) * 2.0 / kappa().sqrt();
        assert!((mid - expect).norm() < 1e-9 * expect.norm());
        assert!(w.samples()[0].norm() < 1e-12 * expect.norm());
        assert!(w.samples()[1000].norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn single_state_needs_smooth_trial() {
        let tf = TrialFunction::new(Complex64::new(1.0, 0.0), 1, 1e-6).unwrap();
        assert!(matches!(
            synth_single(&tf, &StateBranch::new(0, 0.0), kappa(), 1e-9),
            Err(Error::Smoothness { .. })
        ));
    }

    #[test]
    fn two_state_peak_from_symbolic_expansion() {
        // (κ/2 + iχ + D)(κ/2 - iχ + D) = (κ²/4 + χ²) + κ D + D²; at the
        // peak of sin³ the first derivative vanishes and the second is
        // -3(π/T)² A.
        let a = 1.3;
        let tf = TrialFunction::new(Complex64::new(a, 0.0), 3, 1e-6).unwrap();
        let k = kappa();
        let chi = 0.299e6 * TAU;
        let w = synth_multi(&tf, &qubit(), k, 1e-9).unwrap();
        let expect = ((k * k / 4.0 + chi * chi) * a - 3.0 * (PI / 1e-6).powi(2) * a) / k;
        let got = w.samples()[500];
        assert!((got.re - expect).abs() < 1e-9 * expect.abs(), "{got} vs {expect}");
        assert!(got.im.abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn one_branch_product_is_single_state_pulse() {
        let tf = TrialFunction::new(Complex64::new(0.4, 0.1), 3, 0.8e-6).unwrap();
        let set = BranchSet::new(vec![StateBranch::new(0, -1.0e6)]).unwrap();
        let multi = synth_multi(&tf, &set, kappa(), 1e-9).unwrap();
        let single = synth_single(&tf, set.get(0).unwrap(), kappa(), 1e-9).unwrap();
        assert_eq!(multi, single);
    }

    #[test]
    fn coefficients_are_elementary_symmetric_polynomials() {
        let set = BranchSet::new(vec![
            StateBranch::new(0, 1.0),
            StateBranch::new(1, 2.0),
            StateBranch::new(2, -3.0),
        ])
        .unwrap();
        let p = OperatorProduct::new(&set, 2.0);
        let f: Vec<Complex64> = p.factors().to_vec();
        let c = p.coefficients();
        assert_eq!(c.len(), 4);
        assert!((c[3] - 1.0).norm() < 1e-15);
        assert!((c[2] - (f[0] + f[1] + f[2])).norm() < 1e-14);
        assert!((c[1] - (f[0] * f[1] + f[0] * f[2] + f[1] * f[2])).norm() < 1e-14);
        assert!((c[0] - f[0] * f[1] * f[2]).norm() < 1e-14);
        assert!((p.normalization() - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn too_few_derivatives_rejected() {
        let tf = TrialFunction::new(Complex64::new(1.0, 0.0), 2, 1e-6).unwrap();
        assert!(matches!(
            synth_multi(&tf, &qubit(), kappa(), 1e-9),
            Err(Error::Smoothness { exponent: 2, branches: 2 })
        ));
    }
}
