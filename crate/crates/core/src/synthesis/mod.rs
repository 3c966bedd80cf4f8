//! Closed-form construction of reset readout pulses.
//!
//! A pulse is obtained by applying the product of inverse branch transfer
//! operators, `∏_j (κ/2 + iχ_j + d/dt) / √κ`, to a smooth trial envelope.
//! Every branch field then vanishes when the trial envelope does.

mod kerr;
mod linear;
mod trial;

pub use kerr::{
    kerr_estimate, kerr_predict_fields, kerr_scan, reset_contrast, synth_kerr, FactorOrder, KerrOptions, KerrPulse,
    ScanPoint, ScanResult,
};
pub use linear::{designed_field, synth_multi, synth_single, OperatorProduct};
pub use trial::trial_eval;

use crate::error::{Error, Result};
use crate::model::{TrialFunction, Waveform};

/// Default sample spacing of synthesized pulses.
pub const DEFAULT_DT: f64 = 1e-9;

/// Grid covering `[0, duration]` with a step no larger than `max_dt`, chosen
/// so that the pulse end falls exactly on a sample. Returns `(samples, dt)`.
pub fn pulse_grid(duration: f64, max_dt: f64) -> Result<(usize, f64)> {
    if !(max_dt.is_finite() && max_dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("duration", "must be positive and finite"));
    }
    let intervals = (duration / max_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((intervals + 1, duration / intervals as f64))
}

/// Ordinary drive that follows the trial envelope itself, `a_in = a_T`,
/// for comparison with the reset pulses.
pub fn conventional_pulse(tf: &TrialFunction, max_dt: f64) -> Result<Waveform> {
    let (n, dt) = pulse_grid(tf.duration(), max_dt)?;
    Waveform::from_fn(n, dt, 0.0, |t| tf.eval(t, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lands_on_pulse_end() {
        let (n, dt) = pulse_grid(1e-6, 1e-9).unwrap();
        assert_eq!(n, 1001);
        assert!((dt - 1e-9).abs() < 1e-24);
        let (n, dt) = pulse_grid(761.3e-9, 1e-9).unwrap();
        assert_eq!(n, 763);
        assert!(dt <= 1e-9);
        assert!(((n - 1) as f64 * dt - 761.3e-9).abs() < 1e-20);
    }

    #[test]
    fn conventional_pulse_is_the_envelope() {
        let tf = TrialFunction::new(num_complex::Complex64::new(2.0, 0.0), 4, 1e-6).unwrap();
        let p = conventional_pulse(&tf, 1e-9).unwrap();
        assert!((p.samples()[500].re - 2.0).abs() < 1e-12);
        assert!(p.samples()[0].norm() < 1e-15);
    }
}
