//! Semiclassical Kerr cavity simulator.
//!
//! Each branch integrates
//! `da/dt = -(κ/2 + i[χ_j + 4ζ_j|a|²]) a + √κ a_in`
//! with fixed-step RK4 on an oversampled grid, starting from an empty
//! cavity. This is the reference every synthesized pulse is checked
//! against.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BranchSet, DetectionChain, ResonatorParams, StateBranch, Waveform};
use crate::response::{self, DEFAULT_OVERSAMPLE};
use crate::stepper::{Coeffs, Rk4};

/// Contrast reported when the residual is below the numerical floor.
pub const CONTRAST_CAP_DB: f64 = 120.0;

/// Default length of the ring-down window after the pulse, in units of 1/κ.
pub const DEFAULT_TAIL_KAPPA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Integrator {
    /// Internal RK4 steps per input sample.
    pub oversample: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            oversample: DEFAULT_OVERSAMPLE,
        }
    }
}

pub fn evolve_branch(
    a_in: &Waveform,
    branch: &StateBranch,
    kappa: f64,
    integrator: &Integrator,
) -> Result<Waveform> {
    let coeffs = Coeffs::new(branch, kappa);
    let mut out = vec![Complex64::new(0.0, 0.0); a_in.len()];
    Rk4::new(integrator.oversample).run(
        a_in.samples(),
        a_in.dt(),
        0,
        Complex64::new(0.0, 0.0),
        &mut out,
        |_| coeffs,
    )?;
    Waveform::new(out, a_in.dt(), a_in.t0())
}

/// A relaxation event. The branch switches at the first internal step
/// starting at or after `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub field: Waveform,
    pub jumps: Vec<Jump>,
}

impl Trajectory {
    pub fn jumped(&self) -> bool {
        !self.jumps.is_empty()
    }
}

/// Draw the relaxation history of one shot. Waiting times are exponential
/// with the active branch's rate; cascades (2 → 1 → 0) are followed.
fn draw_jumps<R: Rng + ?Sized>(
    a_in: &Waveform,
    branches: &BranchSet,
    initial: usize,
    oversample: usize,
    rng: &mut R,
) -> Result<Vec<Jump>> {
    let h = a_in.dt() / oversample as f64;
    let total_steps = (a_in.len() - 1) * oversample;
    let mut jumps = Vec::new();
    let mut current = *branches.get(initial)?;
    let mut t = a_in.t0();
    while current.decay_rate > 0.0 {
        let target = current.decay_target.ok_or(Error::MissingDecayTarget {
            label: current.label,
            rate: current.decay_rate,
        })?;
        let u: f64 = rng.random();
        let wait = -(-u).ln_1p() / current.decay_rate;
        let time = t + wait;
        let step = ((time - a_in.t0()) / h).ceil();
        if !(step < total_steps as f64) {
            break;
        }
        jumps.push(Jump {
            time,
            from: current.label,
            to: target,
            step: step as usize,
        });
        current = *branches.get(target)?;
        t = time;
    }
    Ok(jumps)
}

fn run_schedule(
    a_in: &Waveform,
    branches: &BranchSet,
    initial: usize,
    kappa: f64,
    rk: &Rk4,
    jumps: &[Jump],
    start: usize,
    a_start: Complex64,
    out: &mut [Complex64],
) -> Result<()> {
    let mut schedule = Vec::with_capacity(jumps.len() + 1);
    schedule.push((0usize, Coeffs::new(branches.get(initial)?, kappa)));
    for j in jumps {
        schedule.push((j.step, Coeffs::new(branches.get(j.to)?, kappa)));
    }
    let mut idx = 0;
    rk.run(a_in.samples(), a_in.dt(), start, a_start, out, |step| {
        while idx + 1 < schedule.len() && schedule[idx + 1].0 <= step {
            idx += 1;
        }
        schedule[idx].1
    })
}

/// One stochastic trajectory with qubit relaxation. The field is continuous
/// across a jump; only the branch parameters change.
pub fn evolve_with_decay<R: Rng + ?Sized>(
    a_in: &Waveform,
    branches: &BranchSet,
    initial: usize,
    kappa: f64,
    integrator: &Integrator,
    rng: &mut R,
) -> Result<Trajectory> {
    let jumps = draw_jumps(a_in, branches, initial, integrator.oversample, rng)?;
    let rk = Rk4::new(integrator.oversample);
    let mut out = vec![Complex64::new(0.0, 0.0); a_in.len()];
    run_schedule(a_in, branches, initial, kappa, &rk, &jumps, 0, Complex64::new(0.0, 0.0), &mut out)?;
    Ok(Trajectory {
        field: Waveform::new(out, a_in.dt(), a_in.t0())?,
        jumps,
    })
}

/// Same law as [`evolve_with_decay`], reusing the no-jump trajectory of the
/// initial branch up to the first jump. Results are bitwise identical.
pub fn evolve_with_decay_cached<R: Rng + ?Sized>(
    a_in: &Waveform,
    branches: &BranchSet,
    initial: usize,
    kappa: f64,
    integrator: &Integrator,
    no_jump: &Waveform,
    rng: &mut R,
) -> Result<Trajectory> {
    a_in.same_grid(no_jump)?;
    let jumps = draw_jumps(a_in, branches, initial, integrator.oversample, rng)?;
    let Some(first) = jumps.first() else {
        return Ok(Trajectory {
            field: no_jump.clone(),
            jumps,
        });
    };
    let start = first.step / integrator.oversample;
    let mut out = no_jump.samples().to_vec();
    let rk = Rk4::new(integrator.oversample);
    run_schedule(a_in, branches, initial, kappa, &rk, &jumps, start, out[start], &mut out)?;
    Ok(Trajectory {
        field: Waveform::new(out, a_in.dt(), a_in.t0())?,
        jumps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetMetrics {
    /// Largest photon number in the trace.
    pub peak: f64,
    /// Photon number at the end of the pulse.
    pub residual: f64,
    pub contrast_db: f64,
    /// Time from the end of the pulse until the photon number first drops to
    /// the noise floor, in units of 1/κ. A lower bound when
    /// `floor_reached` is false.
    pub time_to_floor: f64,
    pub floor_reached: bool,
}

/// `10 log10(peak / residual)`, capped at [`CONTRAST_CAP_DB`].
pub fn contrast_db(peak: f64, residual: f64) -> f64 {
    if peak <= 0.0 {
        return 0.0;
    }
    if residual <= peak * 10f64.powf(-CONTRAST_CAP_DB / 10.0) {
        return CONTRAST_CAP_DB;
    }
    10.0 * (peak / residual).log10()
}

pub fn reset_metrics(trace: &Waveform, t_p: f64, noise_floor: f64, kappa: f64) -> ResetMetrics {
    let photons = trace.photons();
    let peak = photons.iter().copied().fold(0.0, f64::max);
    let end = trace.index_at(t_p);
    let residual = photons[end];
    let hit = photons[end..].iter().position(|&n| n <= noise_floor);
    let (time_to_floor, floor_reached) = match hit {
        Some(i) => ((trace.time(end + i) - trace.time(end)) * kappa, true),
        None => ((trace.end_time() - trace.time(end)) * kappa, false),
    };
    ResetMetrics {
        peak,
        residual,
        contrast_db: contrast_db(peak, residual),
        time_to_floor,
        floor_reached,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    pub label: usize,
    pub field: Waveform,
    pub output: Waveform,
    pub metrics: ResetMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub pulse_duration: f64,
    pub branches: Vec<BranchTrace>,
}

/// Serializable summary of a [`SimResult`], without the traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub pulse_duration_s: f64,
    pub tail_s: f64,
    pub branches: Vec<BranchReport>,
    pub worst_contrast_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: usize,
    pub peak_photons: f64,
    pub residual_photons: f64,
    pub reset_contrast_db: f64,
    pub time_to_noise_floor_kappa: f64,
    pub floor_reached: bool,
}

impl SimResult {
    pub fn worst_contrast_db(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.metrics.contrast_db)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn branch(&self, label: usize) -> Option<&BranchTrace> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn report(&self) -> SimReport {
        let tail = self
            .branches
            .first()
            .map(|b| b.field.end_time() - self.pulse_duration)
            .unwrap_or(0.0);
        SimReport {
            pulse_duration_s: self.pulse_duration,
            tail_s: tail,
            branches: self
                .branches
                .iter()
                .map(|b| BranchReport {
                    label: b.label,
                    peak_photons: b.metrics.peak,
                    residual_photons: b.metrics.residual,
                    reset_contrast_db: b.metrics.contrast_db,
                    time_to_noise_floor_kappa: b.metrics.time_to_floor,
                    floor_reached: b.metrics.floor_reached,
                })
                .collect(),
            worst_contrast_db: self.worst_contrast_db(),
        }
    }
}

/// Simulate every branch for the pulse followed by `tail` seconds of
/// silence. The pulse is assumed to start at its first sample and end at
/// `t0 + pulse_duration`.
pub fn simulate(
    pulse: &Waveform,
    pulse_duration: f64,
    branches: &BranchSet,
    resonator: &ResonatorParams,
    chain: &DetectionChain,
    integrator: &Integrator,
    tail: f64,
) -> Result<SimResult> {
    if !(tail >= 0.0) {
        return Err(Error::invalid("tail", "must be non-negative"));
    }
    let extra = (tail / pulse.dt()).round() as usize;
    let drive = pulse.padded(extra);
    let kappa = resonator.kappa;
    let t_end = pulse.t0() + pulse_duration;
    let traces = branches
        .iter()
        .map(|b| {
            let field = evolve_branch(&drive, b, kappa, integrator)?;
            let output = response::output_field(&field, &drive, chain)?;
            let metrics = reset_metrics(&field, t_end, resonator.noise_floor_photons, kappa);
            Ok(BranchTrace {
                label: b.label,
                field,
                output,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimResult {
        pulse_duration,
        branches: traces,
    })
}
