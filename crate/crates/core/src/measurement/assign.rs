use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_double_gaussian, DoubleGaussianFit, Histogram, MIN_FIT_SAMPLES};
use super::shots::ShotEnsemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    /// Unit vector of the discrimination axis in the IQ plane, `[re, im]`.
    pub axis: [f64; 2],
    /// Threshold on the projected value; larger values are assigned to 1.
    pub threshold: f64,
    /// P(1|0)
    pub p10: f64,
    /// P(0|1)
    pub p01: f64,
    /// `½ [P(1|0) + P(0|1)]`, counted.
    pub error: f64,
    pub shots: [usize; 2],
    /// Joint double-Gaussian fit of the projected histograms, absent when
    /// the two peaks cannot be told apart.
    pub fit: Option<DoubleGaussianFit>,
    /// Midpoint threshold of the fitted cores.
    pub fit_threshold: Option<f64>,
    /// Gaussian-overlap error of the fitted cores.
    pub fit_error: Option<f64>,
}

/// Projection of every shot on the mean-difference axis.
pub fn project(values: &[Complex64], axis: Complex64) -> Vec<f64> {
    values.iter().map(|v| (v * axis.conj()).re).collect()
}

/// Unit vector along `⟨S₁⟩ - ⟨S₀⟩`, or the real axis when the means agree.
pub fn discrimination_axis(e0: &ShotEnsemble, e1: &ShotEnsemble) -> Complex64 {
    let d = e1.mean() - e0.mean();
    if d.norm() > 0.0 {
        d / d.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Threshold minimising the counted error `½[P(1|0) + P(0|1)]`, scanning
/// midpoints of the sorted pooled values. Returns `(threshold, p10, p01)`.
pub fn optimal_threshold(x0: &[f64], x1: &[f64]) -> (f64, f64, f64) {
    let mut pooled: Vec<(f64, bool)> = x0
        .iter()
        .map(|&v| (v, false))
        .chain(x1.iter().map(|&v| (v, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n0, n1) = (x0.len() as f64, x1.len() as f64);
    // threshold below everything: all assigned to 1
    let mut above0 = x0.len();
    let mut below1 = 0usize;
    let mut best = (f64::MIN, 1.0, 0.0);
    let mut best_err = 0.5;
    let mut i = 0;
    while i < pooled.len() {
        let v = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == v {
            if pooled[i].1 {
                below1 += 1;
            } else {
                above0 -= 1;
            }
            i += 1;
        }
        let p10 = above0 as f64 / n0;
        let p01 = below1 as f64 / n1;
        let err = 0.5 * (p10 + p01);
        if err < best_err {
            let thr = if i < pooled.len() { 0.5 * (v + pooled[i].0) } else { v };
            best_err = err;
            best = (thr, p10, p01);
        }
    }
    best
}

pub fn assignment_error(e0: &ShotEnsemble, e1: &ShotEnsemble) -> Result<AssignmentReport> {
    if e0.values.is_empty() || e1.values.is_empty() {
        return Err(Error::invalid("ensembles", "both prepared states need shots"));
    }
    let axis = discrimination_axis(e0, e1);
    let x0 = project(&e0.values, axis);
    let x1 = project(&e1.values, axis);
    let (threshold, p10, p01) = optimal_threshold(&x0, &x1);
    let fit = if x0.len() >= MIN_FIT_SAMPLES && x1.len() >= MIN_FIT_SAMPLES {
        match fit_double_gaussian(&[&x0, &x1], None) {
            Ok(f) => Some(f),
            Err(e @ (Error::Degenerate(_) | Error::Fit(_))) => {
                log::warn!("histogram fit skipped: {e}");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(AssignmentReport {
        axis: [axis.re, axis.im],
        threshold,
        p10,
        p01,
        error: 0.5 * (p10 + p01),
        shots: [x0.len(), x1.len()],
        fit_threshold: fit.as_ref().map(|f| f.midpoint()),
        fit_error: fit.as_ref().map(|f| f.overlap_error()),
        fit,
    })
}

/// Histogram of both ensembles projected on their discrimination axis.
pub fn projected_histogram(e0: &ShotEnsemble, e1: &ShotEnsemble) -> Result<Histogram> {
    let axis = discrimination_axis(e0, e1);
    Histogram::freedman_diaconis(&[&project(&e0.values, axis), &project(&e1.values, axis)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble(prepared: usize, values: Vec<f64>) -> ShotEnsemble {
        ShotEnsemble {
            prepared_state: prepared,
            values: values.into_iter().map(|v| Complex64::new(0.0, v)).collect(),
            seed: 0,
            jumped: 0,
        }
    }

    #[test]
    fn separated_ensembles_have_zero_error() {
        let r = assignment_error(&ensemble(0, vec![0.0, 0.1, 0.2]), &ensemble(1, vec![1.0, 1.1])).unwrap();
        assert_eq!(r.error, 0.0);
        assert!(r.threshold > 0.2 && r.threshold < 1.0);
        assert!((r.axis[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_ensembles_give_one_half() {
        let v: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = assignment_error(&ensemble(0, v.clone()), &ensemble(1, v)).unwrap();
        assert_eq!(r.error, 0.5);
        assert!(r.fit.is_none());
    }

    #[test]
    fn threshold_counts_overlap() {
        let (thr, p10, p01) = optimal_threshold(&[0.0, 1.0, 2.0, 5.0], &[3.0, 4.0, 6.0, 7.0]);
        assert!(thr > 2.0 && thr < 3.0);
        assert_eq!(p10, 0.25);
        assert_eq!(p01, 0.0);
    }
}
