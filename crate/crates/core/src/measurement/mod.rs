//! Single-shot readout: the state-difference signal and its matched filter,
//! a Monte Carlo of noisy integrated records with qubit relaxation,
//! histogram fits and assignment error, duration sweeps, and the
//! detection-chain and AC-Stark calibrations.

mod assign;
mod calibration;
mod fit;
mod shots;
mod signal;
mod sweep;

pub use assign::{
    assignment_error, discrimination_axis, optimal_threshold, project, projected_histogram, AssignmentReport,
};
pub use calibration::{
    ac_stark_calibration, add_noise, chain_probe, fit_detection_chain, linear_fit, AcStarkReport, ChainFit, LineFit, StarkPoint,
    MAX_CHAIN_CONDITION, NONLINEAR_FRACTION, PROBE_SPAN, RAMSEY_WINDOW, STARK_DRIVE,
};
pub use fit::{fit_double_gaussian, DoubleGaussianFit, Histogram, MIN_FIT_SAMPLES};
pub use shots::{shot_rng, simulate_shots, Experiment, ShotEnsemble, ShotSettings, ShotSetup};
pub use signal::{
    gaussian_overlap_error, integrate_shot, matched_filter_snr, readout_signal, weight_function,
    weighted_integral, Noise,
};
pub use sweep::{save_sweep_csv, sweep_duration, write_sweep_csv, SweepMode, SweepRow};
