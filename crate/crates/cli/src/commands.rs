use std::io::Write;
use std::path::{Path, PathBuf};

use drachma::dynamics::{evolve_branch, simulate as simulate_branches, SimReport};
use drachma::measurement::{
    ac_stark_calibration, add_noise, assignment_error, chain_probe, fit_detection_chain, gaussian_overlap_error,
    matched_filter_snr, projected_histogram, save_sweep_csv, shot_rng, simulate_shots, sweep_duration, AcStarkReport,
    AssignmentReport, ChainFit, Experiment, Noise, ShotSettings, ShotSetup, SweepMode,
};
use drachma::model::{angular_to_hz, hz_to_angular};
use drachma::response::{output_field, propagate_linear, BranchResponse, Method};
use drachma::synthesis::{conventional_pulse, kerr_scan, KerrOptions};
use drachma::{Config, Error, Result, TrialFunction, Waveform};
use num_complex::Complex64;
use serde::Serialize;

use crate::manifest::Run;
use crate::{CalibrateArgs, CalibrationMode, KerrArgs, PulseOverrides, ScanZetaArgs, ShotsArgs, SimulateArgs, SweepArgs, SynthArgs};

const FIELD_UNITS: &str = "t: ns, a: sqrt(photons)";
const DRIVE_UNITS: &str = "t: ns, a: sqrt(photons/s)";

/// Largest number of values accepted on one scan axis.
const MAX_AXIS_POINTS: usize = 10_000;

fn load_config(path: &Path) -> Result<(Config, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok((Config::from_json_str(text)?, bytes))
}

fn start(command: &str, config: &Path, out_dir: &Path) -> Result<(Config, Run)> {
    let (cfg, bytes) = load_config(config)?;
    let run = Run::new(command, config, &bytes, out_dir)?;
    Ok((cfg, run))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, "must be positive and finite"))
    }
}

fn experiment(cfg: &Config, o: &PulseOverrides) -> Result<Experiment> {
    let mut exp = Experiment::from_config(cfg);
    exp.dt = positive("dt_ns", o.dt_ns)? * 1e-9;
    if let Some(tp) = o.tp_ns {
        exp = exp.with_duration(positive("tp_ns", tp)? * 1e-9)?;
    }
    if let Some(n) = o.peak_photons {
        exp = exp.with_peak_photons(n)?;
    }
    Ok(exp)
}

fn kerr_options(k: &KerrArgs) -> KerrOptions {
    KerrOptions {
        iterations: k.iterations,
        order: k.order.into(),
        ..KerrOptions::default()
    }
}

fn first_two_labels(exp: &Experiment) -> Result<(usize, usize)> {
    let b = exp.branches.as_slice();
    if b.len() < 2 {
        return Err(Error::invalid("branches", "need at least two branches"));
    }
    Ok((b[0].label, b[1].label))
}

#[derive(Serialize)]
struct SynthSummary {
    kerr: bool,
    samples: usize,
    dt_s: f64,
    duration_s: f64,
    exponent_m: u32,
    amplitude: [f64; 2],
    peak_drive: f64,
    iterations: usize,
    converged: bool,
    last_change: Option<f64>,
    ordering_sensitivity: f64,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let (cfg, mut run) = start("synth", &a.common.config, &a.common.out_dir)?;
    let mut exp = experiment(&cfg, &a.pulse)?;
    exp.kerr = kerr_options(&a.kerr_opts);
    if !a.kerr {
        exp.branches = exp.branches.linear();
    }
    let kp = exp.pulse()?;
    kp.pulse.save_csv(run.output("pulse.csv"), DRIVE_UNITS)?;
    let amp = exp.trial.amplitude();
    run.write_json(
        "synth.json",
        &SynthSummary {
            kerr: a.kerr,
            samples: kp.pulse.len(),
            dt_s: kp.pulse.dt(),
            duration_s: exp.trial.duration(),
            exponent_m: exp.trial.exponent(),
            amplitude: [amp.re, amp.im],
            peak_drive: kp.pulse.peak_abs(),
            iterations: kp.iterations,
            converged: kp.converged,
            last_change: kp.last_change,
            ordering_sensitivity: kp.ordering_sensitivity,
        },
    )?;
    run.finish()
}

#[derive(Serialize)]
struct SimulateSummary {
    source: &'static str,
    #[serde(flatten)]
    report: SimReport,
}

/// Plain envelope scaled so the first branch peaks at `photons` (linear
/// response).
fn scaled_conventional(exp: &Experiment, exponent: u32, photons: Option<f64>) -> Result<Waveform> {
    let tf = TrialFunction::new(exp.trial.amplitude(), exponent, exp.trial.duration())?;
    let pulse = conventional_pulse(&tf, exp.dt)?;
    let Some(target) = photons else {
        return Ok(pulse);
    };
    let first = exp.branches.as_slice()[0].linear();
    let tail = (5.0 / exp.kappa() / exp.dt).ceil() as usize;
    let peak = evolve_branch(&pulse.padded(tail), &first, exp.kappa(), &exp.integrator)?
        .photons()
        .into_iter()
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::invalid("trial.amplitude", "cannot rescale a zero amplitude"));
    }
    Ok(pulse.scaled(Complex64::new((target / peak).sqrt(), 0.0)))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let (cfg, mut run) = start("simulate", &a.common.config, &a.common.out_dir)?;
    let tail_kappa = a.tail_kappa;
    if !(tail_kappa.is_finite() && tail_kappa >= 0.0) {
        return Err(Error::invalid("tail_kappa", "must be non-negative"));
    }
    let (pulse, duration, source) = if let Some(path) = &a.pulse_file {
        let p = Waveform::load_csv(path)?;
        let d = p.end_time() - p.t0();
        (p, d, "file")
    } else if a.conventional {
        let overrides = PulseOverrides {
            peak_photons: None,
            ..a.pulse
        };
        let exp = experiment(&cfg, &overrides)?;
        let p = scaled_conventional(&exp, a.exponent, a.pulse.peak_photons)?;
        (p, exp.trial.duration(), "conventional")
    } else {
        let mut exp = experiment(&cfg, &a.pulse)?;
        exp.kerr = kerr_options(&a.kerr_opts);
        (exp.pulse()?.pulse, exp.trial.duration(), "synthesized")
    };
    let exp = Experiment::from_config(&cfg);
    let tail = tail_kappa / exp.kappa();
    let sim = simulate_branches(
        &pulse,
        duration,
        &exp.branches,
        &exp.resonator,
        &exp.chain,
        &exp.integrator,
        tail,
    )?;
    for b in &sim.branches {
        b.field.save_csv(run.output(&format!("field_{}.csv", b.label)), FIELD_UNITS)?;
        b.output.save_csv(run.output(&format!("output_{}.csv", b.label)), DRIVE_UNITS)?;
    }
    run.write_json(
        "report.json",
        &SimulateSummary {
            source,
            report: sim.report(),
        },
    )?;
    run.finish()
}

#[derive(Serialize)]
struct ShotsSummary {
    shots_per_state: usize,
    seed: u64,
    noise: Noise,
    relaxation: bool,
    t1_s: Option<f64>,
    predicted_snr: Option<f64>,
    predicted_overlap_error: Option<f64>,
    jumped: [usize; 2],
    #[serde(flatten)]
    report: AssignmentReport,
}

pub fn shots(a: &ShotsArgs) -> Result<()> {
    let (cfg, mut run) = start("shots", &a.common.config, &a.common.out_dir)?;
    run.seed(a.seed);
    let mut exp = experiment(&cfg, &a.pulse)?;
    let (l0, l1) = first_two_labels(&exp)?;
    if let Some(t1) = a.t1_us {
        exp = exp.with_t1(l1, l0, Some(positive("t1_us", t1)? * 1e-6))?;
    }
    let noise = if a.no_noise {
        Noise::Off
    } else {
        Noise::vacuum(exp.chain.eta)?
    };
    let settings = ShotSettings {
        shots: a.n,
        seed: a.seed,
        noise,
        relaxation: !a.no_t1,
    };
    let setup = ShotSetup::new(&exp)?;
    let e0 = simulate_shots(&setup, l0, &settings)?;
    let e1 = simulate_shots(&setup, l1, &settings)?;
    let report = assignment_error(&e0, &e1)?;
    match projected_histogram(&e0, &e1) {
        Ok(h) => h.save_csv(run.output("histogram.csv"))?,
        Err(e) => log::warn!("no histogram written: {e}"),
    }
    let predicted_snr = match noise {
        Noise::Off => None,
        Noise::Vacuum { eta } => {
            let dz = setup.weights.map(|w| w.conj());
            Some(matched_filter_snr(&setup.weights, &dz, eta)?)
        }
    };
    let t1_s = exp.branches.get(l1)?.decay_rate;
    run.write_json(
        "assignment.json",
        &ShotsSummary {
            shots_per_state: a.n,
            seed: a.seed,
            noise,
            relaxation: settings.relaxation,
            t1_s: (settings.relaxation && t1_s > 0.0).then(|| 1.0 / t1_s),
            predicted_snr,
            predicted_overlap_error: predicted_snr.map(gaussian_overlap_error),
            jumped: [e0.jumped, e1.jumped],
            report,
        },
    )?;
    run.finish()
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let (cfg, mut run) = start("sweep", &a.common.config, &a.common.out_dir)?;
    run.seed(a.seed);
    let mode: SweepMode = a.mode.parse()?;
    let mut exp = Experiment::from_config(&cfg);
    exp.dt = positive("dt_ns", a.dt_ns)? * 1e-9;
    let durations = a
        .tp_list
        .iter()
        .map(|&t| positive("tp_list", t).map(|t| t * 1e-9))
        .collect::<Result<Vec<_>>>()?;
    let settings = ShotSettings {
        shots: a.n,
        seed: a.seed,
        noise: Noise::vacuum(exp.chain.eta)?,
        relaxation: true,
    };
    let rows = sweep_duration(&exp, &durations, a.peak_photons, mode, &settings)?;
    save_sweep_csv(&rows, run.output("sweep.csv"))?;
    run.finish()
}

/// `start:stop:step` (inclusive) or a single value, in Hz.
pub fn parse_axis(spec: &str) -> Result<Vec<f64>> {
    let bad = |reason: &str| Error::invalid("grid", format!("'{spec}': {reason}"));
    let parts = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<Vec<_>>>()?;
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    match parts[..] {
        [v] => Ok(vec![v]),
        [lo, hi, step] => {
            if !(step > 0.0) || hi < lo {
                return Err(bad("need stop >= start and a positive step"));
            }
            let count = ((hi - lo) / step + 1e-9).floor() + 1.0;
            if count > MAX_AXIS_POINTS as f64 {
                return Err(bad("too many points"));
            }
            Ok((0..count as usize).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(bad("expected start:stop:step")),
    }
}

#[derive(Serialize)]
struct BestZeta {
    zetas_hz: Vec<f64>,
    contrast_db: f64,
    plant_zetas_hz: Vec<f64>,
    points: usize,
}

pub fn scan_zeta(a: &ScanZetaArgs) -> Result<()> {
    let (cfg, mut run) = start("scan-zeta", &a.common.config, &a.common.out_dir)?;
    let exp = experiment(&cfg, &a.pulse)?;
    let grid = a
        .grid
        .split(',')
        .map(|axis| parse_axis(axis).map(|v| v.into_iter().map(hz_to_angular).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let options = kerr_options(&a.kerr_opts);
    let scan = kerr_scan(&exp.trial, &exp.branches, exp.kappa(), exp.dt, &grid, &options)?;
    scan.save_csv(run.output("scan.csv"))?;
    let best = scan.best_point();
    run.write_json(
        "best.json",
        &BestZeta {
            zetas_hz: best.zetas.iter().copied().map(angular_to_hz).collect(),
            contrast_db: best.contrast_db,
            plant_zetas_hz: exp.branches.iter().map(|b| angular_to_hz(b.zeta)).collect(),
            points: scan.points.len(),
        },
    )?;
    run.finish()
}

#[derive(Serialize)]
struct ChainReport {
    branch: usize,
    synthetic: bool,
    snr_db: Option<f64>,
    /// Injected chain in the same units as the fit (`beta` in √(1/s)).
    injected: Option<[f64; 4]>,
    fit: ChainFit,
    beta_over_sqrt_kappa: f64,
}

#[derive(Serialize)]
struct StarkSummary {
    injected_photons_per_pw: f64,
    #[serde(flatten)]
    report: AcStarkReport,
}

/// Length of the synthetic chain probe.
const PROBE_DURATION: f64 = 100e-6;
const PROBE_PEAK: f64 = 2000.0;

pub fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let (cfg, mut run) = start("calibrate", &a.common.config, &a.common.out_dir)?;
    let exp = Experiment::from_config(&cfg);
    match a.mode {
        CalibrationMode::Chain => {
            let label = match a.branch {
                Some(l) => l,
                None => exp.branches.as_slice()[0].label,
            };
            let branch = *exp.branches.get(label)?;
            let synthetic = a.input.is_none();
            let (a_in, a_out) = match (&a.input, &a.output) {
                (Some(i), Some(o)) => (Waveform::load_csv(i)?, Waveform::load_csv(o)?),
                _ => {
                    run.seed(a.seed);
                    let samples = (PROBE_DURATION / exp.dt).round() as usize + 1;
                    let a_in = chain_probe(samples, exp.dt, PROBE_PEAK)?;
                    let resp = BranchResponse::new(branch.linear(), exp.kappa())?;
                    let field = propagate_linear(&a_in, &resp, Method::Ode)?;
                    let mut a_out = output_field(&field, &a_in, &exp.chain)?;
                    if let Some(snr) = a.snr_db {
                        a_out = add_noise(&a_out, snr, &mut shot_rng(a.seed, 0, 0));
                    }
                    a_in.save_csv(run.output("drive.csv"), DRIVE_UNITS)?;
                    a_out.save_csv(run.output("output.csv"), DRIVE_UNITS)?;
                    (a_in, a_out)
                }
            };
            let fit = fit_detection_chain(&a_in, &a_out, exp.kappa(), &branch)?;
            let c = exp.chain;
            run.write_json(
                "calibration.json",
                &ChainReport {
                    branch: label,
                    synthetic,
                    snr_db: if synthetic { a.snr_db } else { None },
                    injected: synthetic.then_some([c.alpha, c.phi, c.beta, c.theta]),
                    beta_over_sqrt_kappa: fit.beta / exp.kappa().sqrt(),
                    fit,
                },
            )?;
        }
        CalibrationMode::Acstark => {
            let ppp = exp.chain.photons_per_pw;
            let report = ac_stark_calibration(&exp, &a.amplitudes, ppp)?;
            write_stark_csv(&report, run.output("stark.csv"))?;
            run.write_json(
                "calibration.json",
                &StarkSummary {
                    injected_photons_per_pw: ppp,
                    report,
                },
            )?;
        }
    }
    run.finish()
}

fn write_stark_csv(report: &AcStarkReport, path: PathBuf) -> Result<()> {
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(&path, e);
    writeln!(w, "amplitude,photons,power_pw,stark_shift_hz").map_err(io)?;
    for p in &report.points {
        writeln!(
            w,
            "{},{},{},{}",
            p.amplitude,
            p.photons,
            p.power_pw,
            angular_to_hz(p.stark_shift)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
