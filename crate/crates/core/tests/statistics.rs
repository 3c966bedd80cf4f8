use std::f64::consts::SQRT_2;

use drachma::dynamics::Integrator;
use drachma::measurement::{
    assignment_error, gaussian_overlap_error, integrate_shot, matched_filter_snr, project, shot_rng, simulate_shots,
    sweep_duration, weight_function, Experiment, Noise, ShotEnsemble, ShotSettings, ShotSetup, SweepMode,
};
use drachma::model::hz_to_angular;
use drachma::synthesis::KerrOptions;
use drachma::{BranchSet, DetectionChain, ResonatorParams, StateBranch, TrialFunction, Waveform};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const ETA: f64 = 0.17;

fn experiment(tp: f64, t1: Option<f64>) -> Experiment {
    let kappa = hz_to_angular(0.5647e6);
    let mut b1 = StateBranch::new(1, hz_to_angular(-0.299e6));
    if let Some(t1) = t1 {
        b1 = b1.with_decay(1.0 / t1, 0);
    }
    let branches = BranchSet::new(vec![StateBranch::new(0, hz_to_angular(0.299e6)), b1]).unwrap();
    Experiment {
        resonator: ResonatorParams::with_kappa(kappa).unwrap(),
        branches,
        trial: TrialFunction::new(Complex64::new(1e-3, 0.0), 3, tp).unwrap(),
        chain: DetectionChain::ideal(kappa).with_eta(ETA),
        dt: 1e-9,
        kerr: KerrOptions::default(),
        integrator: Integrator::default(),
    }
    .with_peak_photons(100.0)
    .unwrap()
}

fn settings(shots: usize, seed: u64, noise: bool, relaxation: bool) -> ShotSettings {
    ShotSettings {
        shots,
        seed,
        noise: if noise { Noise::vacuum(ETA).unwrap() } else { Noise::Off },
        relaxation,
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn empirical_snr_matches_matched_filter_prediction() {
    let exp = experiment(400e-9, None);
    let setup = ShotSetup::new(&exp).unwrap();
    let predicted = matched_filter_snr(&setup.weights, &exp.readout_signal().unwrap(), ETA).unwrap();
    let s = settings(100_000, 11, true, false);
    let e0 = simulate_shots(&setup, 0, &s).unwrap();
    let e1 = simulate_shots(&setup, 1, &s).unwrap();
    let d = e1.mean() - e0.mean();
    let axis = d / d.norm();
    let (m0, v0) = mean_var(&project(&e0.values, axis));
    let (m1, v1) = mean_var(&project(&e1.values, axis));
    let empirical = (m1 - m0) / (0.5 * (v0 + v1)).sqrt();
    assert!((empirical / predicted - 1.0).abs() < 0.02, "{empirical} vs {predicted}");
}

#[test]
fn noise_only_integral_has_the_model_variance() {
    let w = weight_function(&experiment(500e-9, None).readout_signal().unwrap());
    let zero = Waveform::zeros(w.len(), w.dt(), w.t0()).unwrap();
    let noise = Noise::vacuum(ETA).unwrap();
    let n = 100_000;
    let shots: Vec<Complex64> = (0..n)
        .map(|i| integrate_shot(&zero, &w, noise, &mut shot_rng(3, 0, i)).unwrap())
        .collect();
    let expected = w.energy() / (2.0 * ETA);
    for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
        let x: Vec<f64> = shots.iter().map(part).collect();
        let (m, v) = mean_var(&x);
        assert!(m.abs() < 4.0 * (expected / n as f64).sqrt(), "mean {m}");
        assert!((v / expected - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "variance {v} vs {expected}");
    }
}

fn gaussian_ensemble(prepared: usize, centre: f64, n: usize, seed: u64) -> ShotEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    ShotEnsemble {
        prepared_state: prepared,
        values: (0..n).map(|_| Complex64::new(centre + g.sample(&mut rng), g.sample(&mut rng))).collect(),
        seed,
        jumped: 0,
    }
}

#[test]
fn counted_error_converges_to_gaussian_overlap() {
    let analytic = gaussian_overlap_error(4.0);
    assert!((analytic - 0.5 * statrs::function::erf::erfc(SQRT_2)).abs() < 1e-15);
    let mut previous = f64::INFINITY;
    for (n, seed) in [(10_000usize, 1u64), (1_000_000, 2)] {
        let r = assignment_error(&gaussian_ensemble(0, -2.0, n, seed), &gaussian_ensemble(1, 2.0, n, seed + 100)).unwrap();
        let sigma = binomial_sigma(analytic, 2 * n);
        let dev = (r.error - analytic).abs();
        assert!(dev < 3.0 * sigma, "{n} shots: {} vs {analytic}", r.error);
        let fit = r.fit.unwrap();
        assert!((fit.separation() - 4.0).abs() < 0.05, "{n} shots: separation {}", fit.separation());
        assert!(dev < previous.max(3.0 * sigma));
        previous = 3.0 * sigma;
    }
}

#[test]
fn matched_filter_beats_simple_weights() {
    for tp in [300e-9, 500e-9, 1000e-9] {
        let z = experiment(tp, None).readout_signal().unwrap();
        let matched = matched_filter_snr(&weight_function(&z), &z, ETA).unwrap();
        // Cauchy-Schwarz bound is attained by W = Z*
        assert!((matched / (2.0 * ETA * z.energy()).sqrt() - 1.0).abs() < 1e-12);
        let constant = z.map(|_| Complex64::new(1.0, 0.0));
        let quarter = z.len() / 4;
        let boxcar = Waveform::from_fn(z.len(), z.dt(), z.t0(), |t| {
            let k = ((t - z.t0()) / z.dt()).round() as usize;
            let on = (quarter..3 * quarter).contains(&k);
            Complex64::new(if on { 1.0 } else { 0.0 }, 0.0)
        })
        .unwrap();
        for w in [constant, boxcar] {
            let snr = matched_filter_snr(&w, &z, ETA).unwrap();
            assert!(snr < matched, "T_p {tp}: {snr} >= {matched}");
        }
    }
}

#[test]
fn readout_signal_sits_in_one_quadrature() {
    let exp = experiment(500e-9, None);
    let z = exp.readout_signal().unwrap();
    // the signal is i(χ₀ - χ₁) a_T / √κ times a real chain gain: purely imaginary
    let total = z.energy();
    let other: f64 = z.samples().iter().map(|v| v.re * v.re).sum::<f64>() * z.dt();
    assert!(other / total < 1e-6, "{}", other / total);
    let setup = ShotSetup::new(&exp).unwrap();
    let s = settings(1, 0, false, false);
    let d = simulate_shots(&setup, 1, &s).unwrap().mean() - simulate_shots(&setup, 0, &s).unwrap().mean();
    assert!(d.im.abs() / d.norm() < 1e-6, "{d}");
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let setup = ShotSetup::new(&experiment(500e-9, Some(5e-6))).unwrap();
    let s = settings(5_000, 42, true, true);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_shots(&setup, 1, &s).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert!(a.jumped > 0);
    assert_eq!(a, b);
}

#[test]
fn jump_fraction_follows_exponential_law() {
    let t1 = 50e-6;
    let setup = ShotSetup::new(&experiment(760e-9, Some(t1))).unwrap();
    let n = 1_000_000;
    let e1 = simulate_shots(&setup, 1, &settings(n, 9, false, true)).unwrap();
    let window = (setup.pulse.len() - 1) as f64 * setup.pulse.dt();
    let p = -(-window / t1).exp_m1();
    let f = e1.jumped as f64 / n as f64;
    assert!((f - p).abs() < 3.0 * binomial_sigma(p, n), "{f} vs {p}");
}

#[test]
fn ground_state_has_no_excited_weight() {
    let setup = ShotSetup::new(&experiment(760e-9, Some(20e-6))).unwrap();
    let s = settings(100_000, 5, true, true);
    let e0 = simulate_shots(&setup, 0, &s).unwrap();
    let e1 = simulate_shots(&setup, 1, &s).unwrap();
    assert_eq!(e0.jumped, 0);
    assert!(e1.jumped > 0);
    let fit = assignment_error(&e0, &e1).unwrap().fit.unwrap();
    assert!(fit.weights[0] < 1e-3, "{:?}", fit.weights);
    assert!(fit.weights[1] < 1.0);
}

#[test]
fn error_falls_with_pulse_duration() {
    let exp = experiment(500e-9, None);
    let rows = sweep_duration(
        &exp,
        &[200e-9, 300e-9, 500e-9, 800e-9],
        100.0,
        SweepMode::Error,
        &settings(20_000, 1, true, false),
    )
    .unwrap();
    let errors: Vec<f64> = rows.iter().map(|r| r.error.unwrap()).collect();
    for pair in errors.windows(2) {
        let slack = 3.0 * binomial_sigma(pair[0], 40_000);
        assert!(pair[1] <= pair[0] + slack, "{errors:?}");
    }
    assert!(errors[3] < errors[0]);
}
