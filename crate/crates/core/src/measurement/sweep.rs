use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assign::assignment_error;
use super::shots::{simulate_shots, Experiment, ShotSettings, ShotSetup};
use super::signal::{matched_filter_snr, weight_function};
use crate::error::{Error, Result};
use crate::synthesis::reset_contrast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    MaxSignal,
    Error,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_signal" | "max-signal" => Ok(Self::MaxSignal),
            "error" => Ok(Self::Error),
            other => Err(Error::invalid("mode", format!("unknown sweep mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub duration_s: f64,
    /// `max |Z_RO(t)|`.
    pub peak_signal: f64,
    pub snr: f64,
    /// Counted assignment error, only in error mode.
    pub error: Option<f64>,
    /// Worst-branch reset contrast of the simulated pulse.
    pub contrast_db: f64,
}

/// One row per pulse duration with the amplitude rescaled to the same linear
/// peak photon number.
pub fn sweep_duration(
    exp: &Experiment,
    durations: &[f64],
    peak_photons: f64,
    mode: SweepMode,
    shots: &ShotSettings,
) -> Result<Vec<SweepRow>> {
    if durations.is_empty() {
        return Err(Error::invalid("durations", "need at least one pulse duration"));
    }
    durations
        .iter()
        .map(|&tp| {
            let e = exp.clone().with_duration(tp)?.with_peak_photons(peak_photons)?;
            let z = e.readout_signal()?;
            let w = weight_function(&z);
            let snr = matched_filter_snr(&w, &z, e.chain.eta)?;
            let setup = ShotSetup::new(&e)?;
            let contrast_db = reset_contrast(&setup.pulse, &e.branches, e.kappa(), &e.integrator)?;
            let error = match mode {
                SweepMode::MaxSignal => None,
                SweepMode::Error => {
                    let labels: Vec<usize> = e.branches.iter().map(|b| b.label).collect();
                    let e0 = simulate_shots(&setup, labels[0], shots)?;
                    let e1 = simulate_shots(&setup, labels[1], shots)?;
                    Some(assignment_error(&e0, &e1)?.error)
                }
            };
            Ok(SweepRow {
                duration_s: tp,
                peak_signal: z.peak_abs(),
                snr,
                error,
                contrast_db,
            })
        })
        .collect()
}

/// `duration_ns,peak_signal,snr,error,contrast_db`; the error column is
/// empty in max-signal mode.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse {
        what: "sweep csv".into(),
        reason: e.to_string(),
    };
    w.write_record(["duration_ns", "peak_signal", "snr", "error", "contrast_db"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            (r.duration_s * 1e9).to_string(),
            r.peak_signal.to_string(),
            r.snr.to_string(),
            r.error.map(|e| e.to_string()).unwrap_or_default(),
            r.contrast_db.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))
}

pub fn save_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep_csv(rows, file)
}
