use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{synth_multi, OperatorProduct};
use super::pulse_grid;
use crate::dynamics::{contrast_db, evolve_branch, Integrator};
use crate::error::{Error, Result};
use crate::model::{angular_to_hz, BranchSet, TrialFunction, Waveform};
use crate::response::DEFAULT_OVERSAMPLE;

/// Order in which the time-dependent Kerr factors are composed.
///
/// `Ascending` reads the product as written, `F_0 F_1 … F_{N-1} a_T`, so the
/// factor of the last branch acts on the trial function first. The branch
/// whose factor is applied last is reset exactly; the others pick up the
/// commutator of the factors, `i(ṡ_k - ṡ_j) a_T`. `Symmetric` averages the
/// two orders and splits that error evenly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorOrder {
    Ascending,
    Descending,
    #[default]
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrOptions {
    /// 1 uses the linear field estimate only. Higher values refine the photon
    /// numbers with the nonlinear simulator driven by the previous pulse.
    pub iterations: usize,
    /// Relative pulse change accepted as converged in fixed-point mode.
    pub tolerance: f64,
    pub order: FactorOrder,
    pub oversample: usize,
}

impl Default for KerrOptions {
    fn default() -> Self {
        Self {
            iterations: 1,
            tolerance: 1e-4,
            order: FactorOrder::Symmetric,
            oversample: DEFAULT_OVERSAMPLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KerrPulse {
    pub pulse: Waveform,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change of the last fixed-point step, if one was taken.
    pub last_change: Option<f64>,
    /// `max |p_ascending - p_descending| / max |p_ascending|` for the final
    /// photon estimate.
    pub ordering_sensitivity: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn max_rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Photon-number jets `n^{(r)}, r < N` per branch and grid sample.
type PhotonJets = Vec<Vec<Vec<f64>>>;

/// First-iteration estimate: each branch field is the linear designed field,
/// whose derivatives follow exactly from those of the trial function.
fn predicted_jets(tf: &TrialFunction, branches: &BranchSet, kappa: f64, times: &[f64]) -> PhotonJets {
    let n = branches.len();
    let others: Vec<OperatorProduct> = branches
        .iter()
        .map(|b| OperatorProduct::new(branches.iter().filter(|o| o.label != b.label), kappa))
        .collect();
    let max_order = (2 * n - 2).max(n);
    let per_time: Vec<Vec<Vec<f64>>> = times
        .par_iter()
        .map(|&t| {
            let d = tf.derivatives(t, max_order);
            others
                .iter()
                .map(|p| {
                    let field: Vec<Complex64> = (0..n).map(|r| p.apply_shifted(&d, r)).collect();
                    (0..n)
                        .map(|r| {
                            (0..=r)
                                .map(|i| binomial(r, i) * (field[i] * field[r - i].conj()).re)
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|j| per_time.iter().map(|row| row[j].clone()).collect())
        .collect()
}

fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let len = f.len();
    (0..len)
        .map(|i| {
            if len < 3 {
                0.0
            } else if i == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if i == len - 1 {
                (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) / (2.0 * h)
            } else if i == 1 || i == len - 2 {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            } else {
                (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
            }
        })
        .collect()
}

/// Photon jets from simulated fields. `ṅ` comes from the equation of motion,
/// higher orders from finite differences of it.
fn simulated_jets(pulse: &Waveform, branches: &BranchSet, kappa: f64, integrator: &Integrator) -> Result<PhotonJets> {
    let n = branches.len();
    let sk = kappa.sqrt();
    branches
        .as_slice()
        .par_iter()
        .map(|b| {
            let field = evolve_branch(pulse, b, kappa, integrator)?;
            let mut orders: Vec<Vec<f64>> = vec![field.photons()];
            if n > 1 {
                orders.push(
                    field
                        .samples()
                        .iter()
                        .zip(pulse.samples())
                        .map(|(a, p)| -kappa * a.norm_sqr() + 2.0 * sk * (a.conj() * p).re)
                        .collect(),
                );
            }
            while orders.len() < n {
                let next = derivative(orders.last().unwrap(), pulse.dt());
                orders.push(next);
            }
            Ok((0..pulse.len())
                .map(|k| orders.iter().map(|o| o[k]).collect())
                .collect())
        })
        .collect()
}

/// Apply the Kerr-shifted factors to the trial function at one sample.
fn assemble_at(
    d: &[Complex64],
    half_kappa: f64,
    shifts: &[Vec<f64>],
    order: FactorOrder,
    normalization: f64,
) -> Complex64 {
    let n = shifts.len();
    let mut g: Vec<Complex64> = d[..=n].to_vec();
    let sequence: Vec<usize> = match order {
        FactorOrder::Ascending => (0..n).rev().collect(),
        FactorOrder::Descending => (0..n).collect(),
        FactorOrder::Symmetric => {
            return 0.5
                * (assemble_at(d, half_kappa, shifts, FactorOrder::Ascending, normalization)
                    + assemble_at(d, half_kappa, shifts, FactorOrder::Descending, normalization));
        }
    };
    for k in sequence {
        let s = &shifts[k];
        let next: Vec<Complex64> = (0..g.len() - 1)
            .map(|r| {
                let shifted: Complex64 = (0..=r).map(|i| binomial(r, i) * s[i] * g[r - i]).sum();
                half_kappa * g[r] + Complex64::i() * shifted + g[r + 1]
            })
            .collect();
        g = next;
    }
    g[0] * normalization
}

fn assemble(
    tf: &TrialFunction,
    branches: &BranchSet,
    kappa: f64,
    n_samples: usize,
    dt: f64,
    jets: &PhotonJets,
    order: FactorOrder,
) -> Result<Waveform> {
    let n = branches.len();
    let normalization = kappa.powf(-0.5 * n as f64);
    let samples: Vec<Complex64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * dt;
            let d = tf.derivatives(t, n);
            let shifts: Vec<Vec<f64>> = branches
                .iter()
                .zip(jets)
                .map(|(b, jet)| {
                    jet[k]
                        .iter()
                        .enumerate()
                        .map(|(r, &nr)| if r == 0 { b.chi } else { 0.0 } + 4.0 * b.zeta * nr)
                        .collect()
                })
                .collect();
            assemble_at(&d, 0.5 * kappa, &shifts, order, normalization)
        })
        .collect();
    Waveform::new(samples, dt, 0.0)
}

/// First-iteration photon estimate of every branch: the field each branch
/// would follow under the linear multi-branch pulse.
pub fn kerr_predict_fields(
    tf: &TrialFunction,
    branches: &BranchSet,
    kappa: f64,
    max_dt: f64,
) -> Result<Vec<Waveform>> {
    tf.check_smoothness(branches.len())?;
    branches
        .iter()
        .map(|b| super::designed_field(tf, branches, b.label, kappa, max_dt))
        .collect()
}

/// Pulse with every factor shifted by the Kerr term `4ζ_j n_j(t)`.
///
/// Without any Kerr constant this is exactly [`synth_multi`].
pub fn synth_kerr(
    tf: &TrialFunction,
    branches: &BranchSet,
    kappa: f64,
    max_dt: f64,
    options: &KerrOptions,
) -> Result<KerrPulse> {
    tf.check_smoothness(branches.len())?;
    if options.iterations == 0 {
        return Err(Error::invalid("iterations", "must be at least 1"));
    }
    if !branches.has_kerr() {
        return Ok(KerrPulse {
            pulse: synth_multi(tf, branches, kappa, max_dt)?,
            iterations: 1,
            converged: true,
            last_change: None,
            ordering_sensitivity: 0.0,
        });
    }
    let (n_samples, dt) = pulse_grid(tf.duration(), max_dt)?;
    let times: Vec<f64> = (0..n_samples).map(|k| k as f64 * dt).collect();
    let integrator = Integrator {
        oversample: options.oversample,
    };

    let mut jets = predicted_jets(tf, branches, kappa, &times);
    let mut pulse = assemble(tf, branches, kappa, n_samples, dt, &jets, options.order)?;
    let mut done = 1;
    let mut last_change = None;
    let mut converged = options.iterations == 1;
    while done < options.iterations {
        jets = simulated_jets(&pulse, branches, kappa, &integrator)?;
        let next = assemble(tf, branches, kappa, n_samples, dt, &jets, options.order)?;
        let change = max_rel_diff(next.samples(), pulse.samples());
        pulse = next;
        done += 1;
        last_change = Some(change);
        log::debug!("kerr fixed point iteration {done}: change {change:.3e}");
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: done,
            change: last_change.unwrap_or(f64::NAN),
        });
    }
    let ascending = assemble(tf, branches, kappa, n_samples, dt, &jets, FactorOrder::Ascending)?;
    let descending = assemble(tf, branches, kappa, n_samples, dt, &jets, FactorOrder::Descending)?;
    let ordering_sensitivity = max_rel_diff(ascending.samples(), descending.samples());
    Ok(KerrPulse {
        pulse,
        iterations: done,
        converged,
        last_change,
        ordering_sensitivity,
    })
}

/// First-order dispersive estimate `-g⁴/Δ³` of the Kerr constant.
pub fn kerr_estimate(g: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(-g.powi(4) / delta.powi(3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Candidate Kerr constants used for synthesis, rad/s, one per branch.
    pub zetas: Vec<f64>,
    /// Worst-branch reset contrast against the plant.
    pub contrast_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Index of the best point in `points`.
    pub best: usize,
}

impl ScanResult {
    pub fn best_point(&self) -> &ScanPoint {
        &self.points[self.best]
    }

    /// One row per grid point: `zeta0_hz,zeta1_hz,…,contrast_db`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.points.first().map_or(0, |p| p.zetas.len());
        let mut header: Vec<String> = (0..n).map(|j| format!("zeta{j}_hz")).collect();
        header.push("contrast_db".into());
        w.write_record(&header).map_err(csv_error)?;
        for p in &self.points {
            let mut row: Vec<String> = p.zetas.iter().map(|z| angular_to_hz(*z).to_string()).collect();
            row.push(p.contrast_db.to_string());
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("<scan csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        what: "scan csv".into(),
        reason: e.to_string(),
    }
}

/// Worst-branch reset contrast at the end of `pulse` when driving `plant`.
pub fn reset_contrast(pulse: &Waveform, plant: &BranchSet, kappa: f64, integrator: &Integrator) -> Result<f64> {
    plant
        .iter()
        .map(|b| {
            let n = evolve_branch(pulse, b, kappa, integrator)?.photons();
            let peak = n.iter().copied().fold(0.0, f64::max);
            Ok(contrast_db(peak, *n.last().unwrap()))
        })
        .try_fold(f64::INFINITY, |acc, c: Result<f64>| Ok(acc.min(c?)))
}

/// Synthesize with every candidate Kerr vector on the grid (one axis per
/// branch, rad/s) and simulate against the plant. The best point maximizes
/// the worst-branch reset contrast; ties go to the earliest point.
pub fn kerr_scan(
    tf: &TrialFunction,
    plant: &BranchSet,
    kappa: f64,
    max_dt: f64,
    grid: &[Vec<f64>],
    options: &KerrOptions,
) -> Result<ScanResult> {
    if grid.len() != plant.len() {
        return Err(Error::invalid(
            "zeta_grid",
            format!("expected {} axes, got {}", plant.len(), grid.len()),
        ));
    }
    if grid.iter().any(|axis| axis.is_empty()) {
        return Err(Error::invalid("zeta_grid", "every axis needs at least one value"));
    }
    let mut candidates: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in grid {
        candidates = candidates
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&z| {
                    let mut v = prefix.clone();
                    v.push(z);
                    v
                })
            })
            .collect();
    }
    let integrator = Integrator {
        oversample: options.oversample,
    };
    let points = candidates
        .into_par_iter()
        .map(|zetas| {
            let model = plant.with_zetas(&zetas)?;
            let pulse = synth_kerr(tf, &model, kappa, max_dt, options)?.pulse;
            let contrast_db = reset_contrast(&pulse, plant, kappa, &integrator)?;
            Ok(ScanPoint { zetas, contrast_db })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.contrast_db > points[best].contrast_db {
            best = i;
        }
    }
    Ok(ScanResult { points, best })
}
