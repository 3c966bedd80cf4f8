use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::signal::{noise_integral, readout_signal, weight_function, weighted_integral, Noise};
use crate::dynamics::{evolve_branch, evolve_with_decay_cached, Integrator};
use crate::error::{Error, Result};
use crate::model::{BranchSet, Config, DetectionChain, ResonatorParams, StateBranch, TrialFunction, Waveform};
use crate::response::output_field;
use crate::synthesis::{designed_field, synth_kerr, KerrOptions, KerrPulse, DEFAULT_DT};

/// Everything needed to synthesize, simulate and read out one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub resonator: ResonatorParams,
    pub branches: BranchSet,
    pub trial: TrialFunction,
    pub chain: DetectionChain,
    pub dt: f64,
    /// Kerr correction used when the branches carry Kerr constants.
    pub kerr: KerrOptions,
    pub integrator: Integrator,
}

impl Experiment {
    pub fn from_config(config: &Config) -> Self {
        Self {
            resonator: config.resonator,
            branches: config.branches.clone(),
            trial: config.trial,
            chain: config.detection,
            dt: DEFAULT_DT,
            kerr: KerrOptions::default(),
            integrator: Integrator::default(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.resonator.kappa
    }

    pub fn with_duration(mut self, duration: f64) -> Result<Self> {
        self.trial = self.trial.with_duration(duration)?;
        Ok(self)
    }

    pub fn with_amplitude(mut self, amplitude: Complex64) -> Self {
        self.trial = self.trial.with_amplitude(amplitude);
        self
    }

    pub fn with_branches(mut self, branches: BranchSet) -> Self {
        self.branches = branches;
        self
    }

    /// Relaxation of branch `from` into `to` with lifetime `t1` (seconds);
    /// `None` removes it.
    pub fn with_t1(self, from: usize, to: usize, t1: Option<f64>) -> Result<Self> {
        let branches: Vec<StateBranch> = self
            .branches
            .iter()
            .map(|b| {
                if b.label != from {
                    return *b;
                }
                match t1 {
                    Some(t1) => b.with_decay(1.0 / t1, to),
                    None => StateBranch {
                        decay_rate: 0.0,
                        decay_target: None,
                        ..*b
                    },
                }
            })
            .collect();
        if !self.branches.iter().any(|b| b.label == from) {
            return Err(Error::UnknownBranch(from));
        }
        let set = BranchSet::new(branches)?;
        Ok(self.with_branches(set))
    }

    /// Largest photon number any branch reaches under the linear pulse.
    pub fn linear_peak_photons(&self) -> Result<f64> {
        let set = self.branches.linear();
        let mut peak: f64 = 0.0;
        for b in set.iter() {
            let f = designed_field(&self.trial, &set, b.label, self.kappa(), self.dt)?;
            peak = peak.max(f.photons().into_iter().fold(0.0, f64::max));
        }
        Ok(peak)
    }

    /// Rescale the trial amplitude so the linear peak photon number is
    /// `photons`.
    pub fn with_peak_photons(self, photons: f64) -> Result<Self> {
        if !(photons.is_finite() && photons > 0.0) {
            return Err(Error::invalid("peak_photons", "must be positive and finite"));
        }
        let current = self.linear_peak_photons()?;
        if current == 0.0 {
            return Err(Error::invalid("trial.amplitude", "cannot rescale a zero amplitude"));
        }
        let a = self.trial.amplitude() * (photons / current).sqrt();
        Ok(self.with_amplitude(a))
    }

    /// The readout pulse: Kerr-corrected when any branch has a Kerr
    /// constant, otherwise the linear multi-branch pulse.
    pub fn pulse(&self) -> Result<KerrPulse> {
        synth_kerr(&self.trial, &self.branches, self.kappa(), self.dt, &self.kerr)
    }

    /// Closed-form state-difference signal of the linear design.
    pub fn readout_signal(&self) -> Result<Waveform> {
        readout_signal(&self.trial, &self.branches, self.kappa(), &self.chain, self.dt)
    }

    /// Noiseless `β e^{-iθ}(a₁ - a₀)` from simulating the first two
    /// branches under `pulse`. With Kerr branches this differs from the
    /// linear design because the shift difference depends on the photon
    /// numbers.
    pub fn simulated_signal(&self, pulse: &Waveform) -> Result<Waveform> {
        let b = self.branches.as_slice();
        if b.len() != 2 {
            return Err(Error::invalid(
                "branches",
                format!("readout signal needs two branches, got {}", b.len()),
            ));
        }
        let a0 = evolve_branch(pulse, &b[0], self.kappa(), &self.integrator)?;
        let a1 = evolve_branch(pulse, &b[1], self.kappa(), &self.integrator)?;
        let gain = self.chain.cavity_gain();
        a1.zip_with(&a0, |x, y| gain * (x - y))
    }
}

/// Pulse and matched-filter weights shared by every shot of an experiment.
/// The weights follow the closed-form signal for linear branches and the
/// simulated signal when Kerr constants are present.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSetup {
    pub pulse: Waveform,
    pub weights: Waveform,
    pub branches: BranchSet,
    pub kappa: f64,
    pub chain: DetectionChain,
    pub integrator: Integrator,
}

impl ShotSetup {
    pub fn new(exp: &Experiment) -> Result<Self> {
        let pulse = exp.pulse()?.pulse;
        let signal = if exp.branches.has_kerr() {
            exp.simulated_signal(&pulse)?
        } else {
            exp.readout_signal()?
        };
        let weights = weight_function(&signal);
        Ok(Self {
            pulse,
            weights,
            branches: exp.branches.clone(),
            kappa: exp.kappa(),
            chain: exp.chain,
            integrator: exp.integrator,
        })
    }

    /// Same pulse and weights against a different plant, e.g. another T1.
    pub fn with_branches(&self, branches: BranchSet) -> Self {
        Self {
            branches,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSettings {
    pub shots: usize,
    pub seed: u64,
    pub noise: Noise,
    /// Draw relaxation jumps from the branch decay rates.
    pub relaxation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotEnsemble {
    pub prepared_state: usize,
    pub values: Vec<Complex64>,
    pub seed: u64,
    /// Shots in which at least one relaxation jump happened.
    pub jumped: usize,
}

impl ShotEnsemble {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }
}

/// Generator for shot `index`: the stream depends only on the seed, the
/// prepared state and the index, never on scheduling.
pub fn shot_rng(seed: u64, prepared: usize, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(prepared as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Repeated single-shot readout of state `prepared`. Each shot draws its
/// relaxation history first and then the record noise, so runs that differ
/// only in T1 share both.
pub fn simulate_shots(setup: &ShotSetup, prepared: usize, settings: &ShotSettings) -> Result<ShotEnsemble> {
    if settings.shots == 0 {
        return Err(Error::invalid("shots", "must be at least 1"));
    }
    let branch = setup.branches.get(prepared)?;
    let plant = if settings.relaxation {
        setup.branches.clone()
    } else {
        BranchSet::new(
            setup
                .branches
                .iter()
                .map(|b| StateBranch {
                    decay_rate: 0.0,
                    decay_target: None,
                    ..*b
                })
                .collect(),
        )?
    };
    let field = evolve_branch(&setup.pulse, branch, setup.kappa, &setup.integrator)?;
    let clean = weighted_integral(&output_field(&field, &setup.pulse, &setup.chain)?, &setup.weights)?;
    let sigma = settings.noise.sigma(setup.weights.dt());
    let may_jump = settings.relaxation && branch.decay_rate > 0.0;

    let results = (0..settings.shots as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(settings.seed, prepared, i);
            let (value, jumped) = if may_jump {
                let traj = evolve_with_decay_cached(
                    &setup.pulse,
                    &plant,
                    prepared,
                    setup.kappa,
                    &setup.integrator,
                    &field,
                    &mut rng,
                )?;
                if traj.jumped() {
                    let out = output_field(&traj.field, &setup.pulse, &setup.chain)?;
                    (weighted_integral(&out, &setup.weights)?, true)
                } else {
                    (clean, false)
                }
            } else {
                (clean, false)
            };
            Ok((value + noise_integral(&setup.weights, sigma, &mut rng), jumped))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShotEnsemble {
        prepared_state: prepared,
        jumped: results.iter().filter(|r| r.1).count(),
        values: results.into_iter().map(|r| r.0).collect(),
        seed: settings.seed,
    })
}
