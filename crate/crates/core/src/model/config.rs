//! JSON configuration files.
//!
//! Frequencies in the file are ordinary frequencies in Hz; every one of
//! them is converted with [`hz_to_angular`], i.e. `value_hz * TAU`, and no
//! other scaling is applied on the way in. Two quantities are not angular
//! frequencies and are taken as-is:
//!
//! * `decay_rate_hz` is a relaxation rate `1/T1` in 1/s.
//! * `detection.beta` is given in units of √κ, so the ideal single-port
//!   chain is `beta = 1`. Internally it is multiplied by √κ.
//!
//! A [`Config`] keeps the [`ConfigFile`] it was built from and serializes
//! that, so a save/load round trip reproduces the file values bit for bit.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    BranchSet, DetectionChain, ResonatorParams, StateBranch, TrialFunction,
    DEFAULT_NOISE_FLOOR_PHOTONS,
};
use crate::error::{Error, Result};

/// Convert an ordinary frequency (Hz) to an angular one (rad/s).
#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    hz * TAU
}

/// Inverse of [`hz_to_angular`], for reporting.
#[inline]
pub fn angular_to_hz(rad_per_s: f64) -> f64 {
    rad_per_s / TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSection {
    pub kappa_hz: f64,
    #[serde(default)]
    pub carrier_detuning_hz: f64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor_photons: f64,
}

fn default_noise_floor() -> f64 {
    DEFAULT_NOISE_FLOOR_PHOTONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    pub label: usize,
    pub chi_hz: f64,
    #[serde(default)]
    pub zeta_hz: f64,
    #[serde(default)]
    pub decay_rate_hz: f64,
    #[serde(default)]
    pub decay_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSection {
    pub amplitude_re: f64,
    #[serde(default)]
    pub amplitude_im: f64,
    pub exponent_m: u32,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub alpha: f64,
    pub phi_rad: f64,
    pub beta: f64,
    pub theta_rad: f64,
    pub eta: f64,
    pub photons_per_pw: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            phi_rad: 0.0,
            beta: 1.0,
            theta_rad: 0.0,
            eta: 1.0,
            photons_per_pw: 1.0,
        }
    }
}

/// On-disk layout, in file units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub resonator: ResonatorSection,
    pub branches: Vec<BranchSection>,
    pub trial: TrialSection,
    #[serde(default)]
    pub detection: DetectionSection,
}

/// Validated configuration in internal (angular) units.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub resonator: ResonatorParams,
    pub branches: BranchSet,
    pub trial: TrialFunction,
    pub detection: DetectionChain,
    source: ConfigFile,
}

impl Config {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let r = &file.resonator;
        let resonator = ResonatorParams::new(
            hz_to_angular(r.kappa_hz),
            hz_to_angular(r.carrier_detuning_hz),
            r.noise_floor_photons,
        )?;
        let branches = BranchSet::new(
            file.branches
                .iter()
                .map(|b| StateBranch {
                    label: b.label,
                    chi: hz_to_angular(b.chi_hz),
                    zeta: hz_to_angular(b.zeta_hz),
                    decay_rate: b.decay_rate_hz,
                    decay_target: b.decay_target,
                })
                .collect(),
        )?;
        let t = &file.trial;
        let trial = TrialFunction::new(
            Complex64::new(t.amplitude_re, t.amplitude_im),
            t.exponent_m,
            t.duration_s,
        )?;
        trial.check_smoothness(branches.len())?;
        let d = &file.detection;
        let detection = DetectionChain::new(
            d.alpha,
            d.phi_rad,
            d.beta * resonator.kappa.sqrt(),
            d.theta_rad,
            d.eta,
            d.photons_per_pw,
        )?;
        Ok(Self {
            resonator,
            branches,
            trial,
            detection,
            source: file,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "config".into(),
            reason: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.source).expect("config sections always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// File-unit view this config was built from.
    pub fn file(&self) -> &ConfigFile {
        &self.source
    }

    pub fn kappa(&self) -> f64 {
        self.resonator.kappa
    }
}
