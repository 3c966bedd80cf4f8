//! Domain types shared by every other module.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod config;
pub mod waveform;

pub use config::{angular_to_hz, hz_to_angular, Config, ConfigFile};
pub use waveform::Waveform;

/// Default photon number treated as the detection noise floor.
pub const DEFAULT_NOISE_FLOOR_PHOTONS: f64 = 5e-3;

/// Readout resonator parameters. Rates are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Energy decay rate κ.
    pub kappa: f64,
    /// Offset of the carrier from the bare cavity frequency. Informational:
    /// the dispersive shifts of the branches are already quoted relative to
    /// the carrier.
    pub carrier_detuning: f64,
    pub noise_floor_photons: f64,
}

impl ResonatorParams {
    pub fn new(kappa: f64, carrier_detuning: f64, noise_floor_photons: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::invalid("resonator.kappa", "must be positive and finite"));
        }
        if !carrier_detuning.is_finite() {
            return Err(Error::invalid("resonator.carrier_detuning", "must be finite"));
        }
        if !(noise_floor_photons.is_finite() && noise_floor_photons > 0.0) {
            return Err(Error::invalid(
                "resonator.noise_floor_photons",
                "must be positive and finite",
            ));
        }
        Ok(Self {
            kappa,
            carrier_detuning,
            noise_floor_photons,
        })
    }

    /// Resonator with the given linewidth, zero carrier offset and the
    /// default noise floor.
    pub fn with_kappa(kappa: f64) -> Result<Self> {
        Self::new(kappa, 0.0, DEFAULT_NOISE_FLOOR_PHOTONS)
    }
}

/// Cavity dynamics conditioned on one qubit (or qutrit) state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBranch {
    pub label: usize,
    /// Dispersive shift of the cavity relative to the carrier (rad/s).
    pub chi: f64,
    /// Kerr constant (rad/s); the cavity frequency shifts by `4ζ|a|²`.
    pub zeta: f64,
    /// Relaxation rate towards `decay_target` (1/s).
    pub decay_rate: f64,
    pub decay_target: Option<usize>,
}

impl StateBranch {
    /// A linear, non-decaying branch.
    pub fn new(label: usize, chi: f64) -> Self {
        Self {
            label,
            chi,
            zeta: 0.0,
            decay_rate: 0.0,
            decay_target: None,
        }
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_decay(mut self, rate: f64, target: usize) -> Self {
        self.decay_rate = rate;
        self.decay_target = Some(target);
        self
    }

    /// Same branch with the Kerr term removed.
    pub fn linear(mut self) -> Self {
        self.zeta = 0.0;
        self
    }

    fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("branches[{}].{}", self.label, name);
        if !self.chi.is_finite() {
            return Err(Error::invalid(field("chi"), "must be finite"));
        }
        if !self.zeta.is_finite() {
            return Err(Error::invalid(field("zeta"), "must be finite"));
        }
        if self.decay_rate.is_nan() || self.decay_rate < 0.0 {
            return Err(Error::invalid(field("decay_rate"), "must be non-negative"));
        }
        if self.decay_rate > 0.0 {
            match self.decay_target {
                None => {
                    return Err(Error::MissingDecayTarget {
                        label: self.label,
                        rate: self.decay_rate,
                    })
                }
                Some(t) if t == self.label => {
                    return Err(Error::invalid(field("decay_target"), "a branch cannot decay into itself"))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Validated, ordered set of state branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StateBranch>", into = "Vec<StateBranch>")]
pub struct BranchSet(pub(crate) Vec<StateBranch>);

impl BranchSet {
    pub fn new(branches: Vec<StateBranch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::invalid("branches", "at least one branch is required"));
        }
        for (i, b) in branches.iter().enumerate() {
            b.validate()?;
            if branches[..i].iter().any(|o| o.label == b.label) {
                return Err(Error::invalid("branches", format!("duplicate label {}", b.label)));
            }
        }
        for b in &branches {
            if let Some(t) = b.decay_target {
                if !branches.iter().any(|o| o.label == t) {
                    return Err(Error::invalid(
                        format!("branches[{}].decay_target", b.label),
                        format!("no branch with label {t}"),
                    ));
                }
            }
        }
        for (i, a) in branches.iter().enumerate() {
            for b in &branches[i + 1..] {
                if a.chi == b.chi {
                    log::warn!(
                        "branches {} and {} share the same dispersive shift; they cannot be told apart",
                        a.label,
                        b.label
                    );
                }
            }
        }
        Ok(Self(branches))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, StateBranch> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[StateBranch] {
        &self.0
    }

    pub fn get(&self, label: usize) -> Result<&StateBranch> {
        self.0
            .iter()
            .find(|b| b.label == label)
            .ok_or(Error::UnknownBranch(label))
    }

    pub fn has_kerr(&self) -> bool {
        self.0.iter().any(|b| b.zeta != 0.0)
    }

    /// Copy of the set with every Kerr constant set to zero.
    pub fn linear(&self) -> Self {
        Self(self.0.iter().map(|b| b.linear()).collect())
    }

    /// Copy of the set with the Kerr constants replaced, in branch order.
    pub fn with_zetas(&self, zetas: &[f64]) -> Result<Self> {
        if zetas.len() != self.0.len() {
            return Err(Error::invalid(
                "zeta",
                format!("expected {} values, got {}", self.0.len(), zetas.len()),
            ));
        }
        Ok(Self(
            self.0
                .iter()
                .zip(zetas)
                .map(|(b, &z)| b.with_zeta(z))
                .collect(),
        ))
    }
}

impl TryFrom<Vec<StateBranch>> for BranchSet {
    type Error = Error;

    fn try_from(v: Vec<StateBranch>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BranchSet> for Vec<StateBranch> {
    fn from(b: BranchSet) -> Self {
        b.0
    }
}

impl<'a> IntoIterator for &'a BranchSet {
    type Item = &'a StateBranch;
    type IntoIter = std::slice::Iter<'a, StateBranch>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Target intra-cavity envelope `A·sinᵐ(πt/T_p)` on `[0, T_p]`, zero elsewhere.
///
/// For a single branch the amplitude is in √photons. With `N` branches the
/// designed fields carry `N - 1` extra derivative factors, so the amplitude
/// is best set by auto-scaling to a peak photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialFunction {
    amplitude: Complex64,
    exponent: u32,
    duration: f64,
}

impl TrialFunction {
    pub fn new(amplitude: Complex64, exponent: u32, duration: f64) -> Result<Self> {
        if !(amplitude.re.is_finite() && amplitude.im.is_finite()) {
            return Err(Error::invalid("trial.amplitude", "must be finite"));
        }
        if exponent == 0 {
            return Err(Error::invalid("trial.exponent_m", "must be a positive integer"));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid("trial.duration_s", "must be positive and finite"));
        }
        Ok(Self {
            amplitude,
            exponent,
            duration,
        })
    }

    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn with_amplitude(mut self, amplitude: Complex64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_duration(self, duration: f64) -> Result<Self> {
        Self::new(self.amplitude, self.exponent, duration)
    }

    /// The first `n` derivatives must vanish at both ends, which needs `m > n`.
    pub fn check_smoothness(&self, n: usize) -> Result<()> {
        if (self.exponent as usize) <= n {
            return Err(Error::Smoothness {
                exponent: self.exponent,
                branches: n,
            });
        }
        Ok(())
    }
}

/// Model of the detection chain:
/// `a_out = α e^{-iφ} a_in + β e^{-iθ} a`.
///
/// `alpha` is dimensionless. `beta` carries units of √(1/s) because it maps
/// the intra-cavity field onto a propagating one; the ideal single-port
/// chain has `beta = √κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub alpha: f64,
    pub phi: f64,
    pub beta: f64,
    pub theta: f64,
    /// Measurement efficiency in (0, 1].
    pub eta: f64,
    /// Photons per picowatt of detected power.
    pub photons_per_pw: f64,
}

impl DetectionChain {
    pub fn new(alpha: f64, phi: f64, beta: f64, theta: f64, eta: f64, photons_per_pw: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid("detection.alpha", "must be non-negative"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("detection.beta", "must be positive"));
        }
        if !(phi.is_finite() && theta.is_finite()) {
            return Err(Error::invalid("detection.phi_rad/theta_rad", "must be finite"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("detection.eta", "must lie in (0, 1]"));
        }
        if !(photons_per_pw.is_finite() && photons_per_pw > 0.0) {
            return Err(Error::invalid("detection.photons_per_pw", "must be positive"));
        }
        Ok(Self {
            alpha,
            phi,
            beta,
            theta,
            eta,
            photons_per_pw,
        })
    }

    /// Lossless single-port chain, `a_out = √κ·a`.
    pub fn ideal(kappa: f64) -> Self {
        Self {
            alpha: 0.0,
            phi: 0.0,
            beta: kappa.sqrt(),
            theta: 0.0,
            eta: 1.0,
            photons_per_pw: 1.0,
        }
    }

    /// Drive through the feed line: the input leaks straight to the output
    /// and `β ≈ α/2` in units of √κ.
    pub fn single_ended(kappa: f64, alpha: f64) -> Self {
        Self {
            alpha,
            beta: 0.5 * alpha * kappa.sqrt(),
            ..Self::ideal(kappa)
        }
    }

    /// Drive through the qubit charge line: almost no direct leakage,
    /// `α ≪ β`.
    pub fn charge_line(kappa: f64) -> Self {
        Self {
            alpha: 1e-3,
            ..Self::ideal(kappa)
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Complex gain of the direct input path, `α e^{-iφ}`.
    pub fn direct_gain(&self) -> Complex64 {
        Complex64::from_polar(self.alpha, -self.phi)
    }

    /// Complex gain of the cavity emission path, `β e^{-iθ}`.
    pub fn cavity_gain(&self) -> Complex64 {
        Complex64::from_polar(self.beta, -self.theta)
    }
}
