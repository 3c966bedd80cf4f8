use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BranchSet, DetectionChain, TrialFunction, Waveform};
use crate::synthesis::designed_field;

/// Expected difference of the detected output between the second and the
/// first branch, `β e^{-iθ} (a₁ - a₀)`, from the linear designed fields.
/// The direct input path cancels in the difference.
pub fn readout_signal(
    tf: &TrialFunction,
    branches: &BranchSet,
    kappa: f64,
    chain: &DetectionChain,
    max_dt: f64,
) -> Result<Waveform> {
    if branches.len() != 2 {
        return Err(Error::invalid(
            "branches",
            format!("readout signal needs two branches, got {}", branches.len()),
        ));
    }
    let b = branches.as_slice();
    let a0 = designed_field(tf, branches, b[0].label, kappa, max_dt)?;
    let a1 = designed_field(tf, branches, b[1].label, kappa, max_dt)?;
    let gain = chain.cavity_gain();
    a1.zip_with(&a0, |x, y| gain * (x - y))
}

/// Matched-filter weights `W(t) = Z(t)*`.
pub fn weight_function(z: &Waveform) -> Waveform {
    z.map(|v| v.conj())
}

/// Output-record noise. `Vacuum` adds complex white Gaussian noise with
/// variance `1/(2η dt)` per quadrature and sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    Off,
    Vacuum { eta: f64 },
}

impl Noise {
    pub fn vacuum(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive and finite"));
        }
        Ok(Self::Vacuum { eta })
    }

    pub(crate) fn sigma(&self, dt: f64) -> f64 {
        match *self {
            Noise::Off => 0.0,
            Noise::Vacuum { eta } => (0.5 / (eta * dt)).sqrt(),
        }
    }
}

/// `Σ W(t_k) ξ_k dt` for one realisation of the record noise.
pub(crate) fn noise_integral<R: Rng + ?Sized>(w: &Waveform, sigma: f64, rng: &mut R) -> Complex64 {
    if sigma == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &wk in w.samples() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        acc += wk * Complex64::new(re, im);
    }
    acc * (sigma * w.dt())
}

/// Noiseless inner product `Σ W a dt`.
pub fn weighted_integral(a_out: &Waveform, w: &Waveform) -> Result<Complex64> {
    a_out.same_grid(w)?;
    Ok(a_out
        .samples()
        .iter()
        .zip(w.samples())
        .map(|(a, wk)| wk * a)
        .sum::<Complex64>()
        * a_out.dt())
}

/// `S = Σ W(t_k) [a_out(t_k) + ξ_k] dt`.
pub fn integrate_shot<R: Rng + ?Sized>(a_out: &Waveform, w: &Waveform, noise: Noise, rng: &mut R) -> Result<Complex64> {
    let clean = weighted_integral(a_out, w)?;
    Ok(clean + noise_integral(w, noise.sigma(w.dt()), rng))
}

/// Separation of the two integrated means over the noise standard deviation
/// along the separation axis: `|Σ W ΔZ dt| / sqrt(Σ |W|² dt / (2η))`.
pub fn matched_filter_snr(w: &Waveform, dz: &Waveform, eta: f64) -> Result<f64> {
    let signal = weighted_integral(dz, w)?.norm();
    let noise = (w.energy() / (2.0 * eta)).sqrt();
    if noise == 0.0 {
        return Ok(0.0);
    }
    Ok(signal / noise)
}

/// Analytic error of a symmetric two-Gaussian discrimination at the given
/// SNR: `½ erfc(SNR / (2√2))`.
pub fn gaussian_overlap_error(snr: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(snr / (2.0 * std::f64::consts::SQRT_2))
}
