use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::shots::Experiment;
use crate::dynamics::evolve_branch;
use crate::error::{Error, Result};
use crate::model::{StateBranch, Waveform};
use crate::response::{propagate_linear_with, BranchResponse, Method};

/// Largest accepted condition number of the column-normalised regressors.
pub const MAX_CHAIN_CONDITION: f64 = 1e3;

/// Length of the square calibration drive.
pub const STARK_DRIVE: f64 = 4e-6;

/// Averaging window at the end of the drive standing in for the Ramsey
/// sequence.
pub const RAMSEY_WINDOW: f64 = 200e-9;

/// Kerr share of the Stark shift above which the calibration is flagged as
/// nonlinear.
pub const NONLINEAR_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("points", "need at least two (x, y) pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainFit {
    pub alpha: f64,
    pub phi: f64,
    /// Absolute cavity gain, √(1/s).
    pub beta: f64,
    pub theta: f64,
    pub condition: f64,
    pub residual_rms: f64,
}

/// Least-squares fit of `a_out = α e^{-iφ} a_in + β e^{-iθ} a`, with `a`
/// propagated from `a_in` through the linear `branch`.
pub fn fit_detection_chain(a_in: &Waveform, a_out: &Waveform, kappa: f64, branch: &StateBranch) -> Result<ChainFit> {
    a_in.same_grid(a_out)?;
    let resp = BranchResponse::new(branch.linear(), kappa)?;
    let a = propagate_linear_with(a_in, &resp, Method::Ode, crate::response::DEFAULT_OVERSAMPLE)?;
    let n = a_in.len();
    let cols = [a_in.samples(), a.samples()];
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let x = DMatrix::from_fn(n, 2, |i, j| cols[j][i] / norms[j]);
    let y = DVector::from_iterator(n, a_out.samples().iter().copied());
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CHAIN_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let g = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Fit(format!("chain least squares: {e}")))?;
    let direct = g[0] / norms[0];
    let cavity = g[1] / norms[1];
    let residual = &y - &x * &g;
    Ok(ChainFit {
        alpha: direct.norm(),
        phi: -direct.arg(),
        beta: cavity.norm(),
        theta: -cavity.arg(),
        condition,
        residual_rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}

/// Half-width of the chain-probe frequency sweep, Hz.
pub const PROBE_SPAN: f64 = 3e6;

/// Chirped sin² burst used as the chain-calibration probe. The frequency
/// sweeps linearly from `-PROBE_SPAN` to `+PROBE_SPAN` so the cavity field and
/// the drive stay linearly independent.
pub fn chain_probe(samples: usize, dt: f64, peak: f64) -> Result<Waveform> {
    let duration = (samples.max(2) - 1) as f64 * dt;
    let span = std::f64::consts::TAU * PROBE_SPAN;
    Waveform::from_fn(samples, dt, 0.0, |t| {
        let env = (std::f64::consts::PI * t / duration).sin().powi(2);
        Complex64::from_polar(peak * env, span * (t * t / duration - t))
    })
}

/// `w` plus circular white Gaussian noise at the given signal-to-noise
/// ratio (mean sample power over noise power, in dB).
pub fn add_noise<R: Rng + ?Sized>(w: &Waveform, snr_db: f64, rng: &mut R) -> Waveform {
    let power = w.samples().iter().map(|z| z.norm_sqr()).sum::<f64>() / w.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    w.map(|z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + sigma * Complex64::new(re, im)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkPoint {
    pub amplitude: f64,
    pub photons: f64,
    pub power_pw: f64,
    /// Qubit frequency shift, rad/s.
    pub stark_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcStarkReport {
    pub points: Vec<StarkPoint>,
    /// Stark shift against detected power.
    pub power_fit: LineFit,
    /// Stark shift against photon number; the slope estimates `χ₀ - χ₁`.
    pub photon_fit: LineFit,
    /// `χ₀ - χ₁` of the configuration, rad/s.
    pub chi_difference: f64,
    pub photons_per_pw: f64,
    pub nonlinear: bool,
}

/// Simulated AC-Stark calibration. Each real drive amplitude (√(photons/s))
/// fills the cavity in the first branch with a square pulse; the photon
/// number averaged over the last [`RAMSEY_WINDOW`] gives the qubit shift
/// `(χ₀ + 4ζ₀n - χ₁ - 4ζ₁n)·n` and the detected power `n / photons_per_pw`.
/// The slope of shift against power divided by `χ₀ - χ₁` recovers the
/// photons-per-pW gain.
pub fn ac_stark_calibration(exp: &Experiment, amplitudes: &[f64], photons_per_pw: f64) -> Result<AcStarkReport> {
    let b = exp.branches.as_slice();
    if b.len() < 2 {
        return Err(Error::invalid("branches", "calibration needs two branches"));
    }
    if amplitudes.len() < 2 {
        return Err(Error::invalid("amplitudes", "need at least two drive amplitudes"));
    }
    if !(photons_per_pw.is_finite() && photons_per_pw > 0.0) {
        return Err(Error::invalid("photons_per_pw", "must be positive and finite"));
    }
    let kappa = exp.kappa();
    if STARK_DRIVE * kappa < 5.0 {
        return Err(Error::invalid(
            "kappa",
            format!("the {STARK_DRIVE:e} s drive is shorter than 5/κ"),
        ));
    }
    let (g, e) = (b[0], b[1]);
    let chi_difference = g.chi - e.chi;
    let samples = (STARK_DRIVE / exp.dt).round() as usize + 1;
    let window = ((RAMSEY_WINDOW / exp.dt).round() as usize).clamp(1, samples);
    let mut nonlinear = false;
    let points = amplitudes
        .iter()
        .map(|&c| {
            let drive = Waveform::from_fn(samples, exp.dt, 0.0, |t| {
                Complex64::new(if t > 0.0 { c } else { 0.0 }, 0.0)
            })?;
            let n = evolve_branch(&drive, &g, kappa, &exp.integrator)?.photons();
            let photons = n[samples - window..].iter().sum::<f64>() / window as f64;
            let kerr = 4.0 * (g.zeta - e.zeta) * photons;
            if kerr.abs() > NONLINEAR_FRACTION * chi_difference.abs() {
                nonlinear = true;
            }
            Ok(StarkPoint {
                amplitude: c,
                photons,
                power_pw: photons / photons_per_pw,
                stark_shift: (chi_difference + kerr) * photons,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if nonlinear {
        log::warn!("AC-Stark calibration: Kerr shift exceeds {NONLINEAR_FRACTION} of the Stark shift");
    }
    let shift: Vec<f64> = points.iter().map(|p| p.stark_shift).collect();
    let power: Vec<f64> = points.iter().map(|p| p.power_pw).collect();
    let photons: Vec<f64> = points.iter().map(|p| p.photons).collect();
    let power_fit = linear_fit(&power, &shift)?;
    let photon_fit = linear_fit(&photons, &shift)?;
    Ok(AcStarkReport {
        photons_per_pw: power_fit.slope / chi_difference,
        points,
        power_fit,
        photon_fit,
        chi_difference,
        nonlinear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Integrator;
    use crate::model::{hz_to_angular, BranchSet, DetectionChain, ResonatorParams, TrialFunction};
    use crate::response::output_field;
    use crate::synthesis::KerrOptions;

    fn kappa() -> f64 {
        hz_to_angular(0.5647e6)
    }

    fn branch() -> StateBranch {
        StateBranch::new(0, hz_to_angular(0.299e6))
    }

    fn probe() -> Waveform {
        chain_probe(100_001, 1e-9, 2000.0).unwrap()
    }

    fn synthetic(chain: &DetectionChain) -> Waveform {
        let a_in = probe();
        let resp = BranchResponse::new(branch(), kappa()).unwrap();
        let a = propagate_linear_with(&a_in, &resp, Method::Ode, crate::response::DEFAULT_OVERSAMPLE).unwrap();
        output_field(&a, &a_in, chain).unwrap()
    }

    #[test]
    fn line_fit_exact() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert_eq!(f.r2, 1.0);
    }

    #[test]
    fn chain_round_trip() {
        let chain = DetectionChain::new(0.3, 0.7, 1.9 * kappa().sqrt(), -1.2, 1.0, 1.0).unwrap();
        let fit = fit_detection_chain(&probe(), &synthetic(&chain), kappa(), &branch()).unwrap();
        assert!((fit.alpha - 0.3).abs() < 1e-9 * 0.3);
        assert!((fit.phi - 0.7).abs() < 1e-9);
        assert!((fit.beta - chain.beta).abs() < 1e-9 * chain.beta);
        assert!((fit.theta + 1.2).abs() < 1e-9);
    }

    #[test]
    fn noisy_chain_round_trip() {
        use rand::SeedableRng;
        let chain = DetectionChain::new(0.3, 0.7, 1.9 * kappa().sqrt(), -1.2, 1.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noisy = add_noise(&synthetic(&chain), 40.0, &mut rng);
        let fit = fit_detection_chain(&probe(), &noisy, kappa(), &branch()).unwrap();
        assert!((fit.alpha - 0.3).abs() < 1e-3 * 0.3, "{fit:?}");
        assert!((fit.beta - chain.beta).abs() < 1e-3 * chain.beta, "{fit:?}");
        assert!((fit.phi - 0.7).abs() < 1e-3);
        assert!((fit.theta + 1.2).abs() < 1e-3);
    }

    #[test]
    fn presets() {
        let se = DetectionChain::single_ended(kappa(), 0.8);
        let fit = fit_detection_chain(&probe(), &synthetic(&se), kappa(), &branch()).unwrap();
        assert!((fit.beta / kappa().sqrt() - fit.alpha / 2.0).abs() < 1e-9);
        let cl = DetectionChain::charge_line(kappa());
        let fit = fit_detection_chain(&probe(), &synthetic(&cl), kappa(), &branch()).unwrap();
        assert!(fit.alpha < 1e-2 * fit.beta / kappa().sqrt());
    }

    #[test]
    fn quasi_static_drive_is_ill_conditioned() {
        let a_in = Waveform::from_fn(20_000, 100e-9, 0.0, |t| {
            Complex64::new(100.0 * (std::f64::consts::PI * t / 2e-3).sin().powi(2), 0.0)
        })
        .unwrap();
        let resp = BranchResponse::new(branch(), kappa()).unwrap();
        let a = propagate_linear_with(&a_in, &resp, Method::Ode, 10).unwrap();
        let out = output_field(&a, &a_in, &DetectionChain::ideal(kappa())).unwrap();
        assert!(matches!(
            fit_detection_chain(&a_in, &out, kappa(), &branch()),
            Err(Error::IllConditioned { .. })
        ));
    }

    fn experiment(zeta: bool) -> Experiment {
        let z = if zeta { 1.0 } else { 0.0 };
        Experiment {
            resonator: ResonatorParams::with_kappa(kappa()).unwrap(),
            branches: BranchSet::new(vec![
                StateBranch::new(0, hz_to_angular(0.299e6)).with_zeta(hz_to_angular(-175.0 * z)),
                StateBranch::new(1, hz_to_angular(-0.299e6)).with_zeta(hz_to_angular(-56.0 * z)),
            ])
            .unwrap(),
            trial: TrialFunction::new(Complex64::new(0.001, 0.0), 3, 500e-9).unwrap(),
            chain: DetectionChain::ideal(kappa()),
            dt: 1e-9,
            kerr: KerrOptions::default(),
            integrator: Integrator::default(),
        }
    }

    #[test]
    fn stark_round_trip_linear_plant() {
        let amps: Vec<f64> = (0..6).map(|k| 100.0 * k as f64).collect();
        let r = ac_stark_calibration(&experiment(false), &amps, 12.4).unwrap();
        assert_eq!(r.points[0].stark_shift, 0.0);
        assert!((r.photons_per_pw - 12.4).abs() < 1e-3 * 12.4, "{}", r.photons_per_pw);
        assert!((r.photon_fit.slope / r.chi_difference - 1.0).abs() < 1e-3);
        assert!(!r.nonlinear);
    }

    #[test]
    fn strong_drive_flags_nonlinearity() {
        let r = ac_stark_calibration(&experiment(true), &[0.0, 15000.0, 25000.0], 12.4).unwrap();
        assert!(r.nonlinear, "{:?}", r.points);
    }
}
