use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Fewest samples per dataset accepted by the histogram fit.
pub const MIN_FIT_SAMPLES: usize = 1000;

const MAX_BINS: usize = 4000;
const MAX_ITERATIONS: usize = 500;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Common binning of several datasets, Freedman–Diaconis width on the
/// pooled values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// One count vector per dataset.
    pub counts: Vec<Vec<u64>>,
}

impl Histogram {
    pub fn freedman_diaconis(datasets: &[&[f64]]) -> Result<Self> {
        let pooled: Vec<f64> = datasets.iter().flat_map(|d| d.iter().copied()).collect();
        if pooled.len() < 2 {
            return Err(Error::invalid("values", "need at least two samples"));
        }
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        let s = sorted(&pooled);
        let (lo, hi) = (s[0], s[s.len() - 1]);
        let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
        let width = 2.0 * iqr / (s.len() as f64).cbrt();
        let bins = if width > 0.0 && hi > lo {
            (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
        } else {
            1
        };
        let span = if hi > lo { hi - lo } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
        let counts = datasets
            .iter()
            .map(|d| {
                let mut c = vec![0u64; bins];
                for &v in d.iter() {
                    let k = (((v - lo) / span) * bins as f64).floor() as isize;
                    c[k.clamp(0, bins as isize - 1) as usize] += 1;
                }
                c
            })
            .collect();
        Ok(Self { edges, counts })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// `bin_center,count_prep0,count_prep1,…`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["bin_center".to_string()];
        header.extend((0..self.counts.len()).map(|d| format!("count_prep{d}")));
        let err = |e: csv::Error| Error::Parse {
            what: "histogram csv".into(),
            reason: e.to_string(),
        };
        w.write_record(&header).map_err(err)?;
        for (k, c) in self.centers().iter().enumerate() {
            let mut row = vec![c.to_string()];
            row.extend(self.counts.iter().map(|counts| counts[k].to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<histogram csv>", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Two Gaussians of common width at `mu0` and `mu1`. `weights[d]` is the
/// fraction of dataset `d` in the `mu1` peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleGaussianFit {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub bins: usize,
}

impl DoubleGaussianFit {
    pub fn separation(&self) -> f64 {
        (self.mu1 - self.mu0).abs()
    }

    /// Misassignment of the two Gaussian cores at the midpoint threshold.
    pub fn overlap_error(&self) -> f64 {
        0.5 * erfc(self.separation() / (2.0 * std::f64::consts::SQRT_2 * self.sigma))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu0 + self.mu1)
    }
}

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Probability mass of `N(mu, sigma)` in `[a, b]` and its derivatives with
/// respect to `mu` and `sigma`.
fn bin_mass(a: f64, b: f64, mu: f64, sigma: f64) -> (f64, f64, f64) {
    let (za, zb) = ((a - mu) / sigma, (b - mu) / sigma);
    let mass = if za > 0.0 {
        // upper tail, avoids cancellation
        phi(-za) - phi(-zb)
    } else {
        phi(zb) - phi(za)
    };
    let (pa, pb) = (pdf(za), pdf(zb));
    (mass, -(pb - pa) / sigma, -(zb * pb - za * pa) / sigma)
}

struct Problem<'a> {
    hist: &'a Histogram,
    totals: Vec<f64>,
}

impl Problem<'_> {
    fn rows(&self) -> usize {
        self.hist.bins() * self.hist.counts.len()
    }

    /// Weighted residuals and Jacobian for `p = [mu0, mu1, sigma, w_0, …]`.
    fn evaluate(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let nd = self.hist.counts.len();
        let nb = self.hist.bins();
        let mut r = DVector::zeros(self.rows());
        let mut j = DMatrix::zeros(self.rows(), 3 + nd);
        for k in 0..nb {
            let (a, b) = (self.hist.edges[k], self.hist.edges[k + 1]);
            let (m0, dm0, ds0) = bin_mass(a, b, p[0], p[2]);
            let (m1, dm1, ds1) = bin_mass(a, b, p[1], p[2]);
            for d in 0..nd {
                let row = d * nb + k;
                let obs = self.hist.counts[d][k] as f64;
                let scale = 1.0 / obs.max(1.0).sqrt();
                let n = self.totals[d];
                let w = p[3 + d];
                let model = n * ((1.0 - w) * m0 + w * m1);
                r[row] = (obs - model) * scale;
                j[(row, 0)] = -n * (1.0 - w) * dm0 * scale;
                j[(row, 1)] = -n * w * dm1 * scale;
                j[(row, 2)] = -n * ((1.0 - w) * ds0 + w * ds1) * scale;
                j[(row, 3 + d)] = -n * (m1 - m0) * scale;
            }
        }
        (r, j)
    }
}

fn clamp_params(p: &mut [f64], sigma_floor: f64) {
    p[2] = p[2].abs().max(sigma_floor);
    for w in &mut p[3..] {
        *w = w.clamp(0.0, 1.0);
    }
}

fn robust_sigma(values: &[f64]) -> f64 {
    let s = sorted(values);
    let med = quantile(&s, 0.5);
    let dev = sorted(&s.iter().map(|v| (v - med).abs()).collect::<Vec<_>>());
    1.4826 * quantile(&dev, 0.5)
}

/// Joint least-squares fit of two common-width Gaussians to the binned
/// datasets, sharing `mu0`, `mu1` and `sigma`. Residuals are weighted by
/// `1/√max(count, 1)`.
///
/// `means` seeds the two centres; by default the medians of the first and
/// last dataset are used. Coinciding centres are reported as degenerate.
pub fn fit_double_gaussian(datasets: &[&[f64]], means: Option<[f64; 2]>) -> Result<DoubleGaussianFit> {
    if datasets.is_empty() {
        return Err(Error::invalid("datasets", "need at least one dataset"));
    }
    if let Some(small) = datasets.iter().find(|d| d.len() < MIN_FIT_SAMPLES) {
        return Err(Error::invalid(
            "datasets",
            format!("need at least {MIN_FIT_SAMPLES} samples per dataset, got {}", small.len()),
        ));
    }
    let hist = Histogram::freedman_diaconis(datasets)?;
    let sigma0 = datasets
        .iter()
        .map(|d| robust_sigma(d))
        .fold(f64::INFINITY, f64::min);
    let [mu0, mu1] = means.unwrap_or_else(|| {
        let first = sorted(datasets[0]);
        let last = sorted(datasets[datasets.len() - 1]);
        [quantile(&first, 0.5), quantile(&last, 0.5)]
    });
    let span = hist.edges[hist.bins()] - hist.edges[0];
    if !(sigma0 > 0.0) || (mu1 - mu0).abs() < 0.05 * sigma0 {
        return Err(Error::Degenerate(format!(
            "peak centres {mu0:.6e} and {mu1:.6e} coincide within the width {sigma0:.3e}"
        )));
    }
    let problem = Problem {
        hist: &hist,
        totals: datasets.iter().map(|d| d.len() as f64).collect(),
    };
    let mut p: Vec<f64> = vec![mu0, mu1, sigma0];
    for d in datasets {
        let near1 = d.iter().filter(|&&v| (v - mu1).abs() < (v - mu0).abs()).count();
        p.push(near1 as f64 / d.len() as f64);
    }
    let sigma_floor = 1e-9 * span.max(sigma0);
    clamp_params(&mut p, sigma_floor);

    let np = p.len();
    let (mut r, mut jac) = problem.evaluate(&p);
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            let mut rhs = -&g;
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            // weights held at a bound by the gradient stay fixed
            for i in 3..np {
                let pinned = (p[i] <= 0.0 && g[i] > 0.0) || (p[i] >= 1.0 && g[i] < 0.0);
                if pinned {
                    a.row_mut(i).fill(0.0);
                    a.column_mut(i).fill(0.0);
                    a[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            clamp_params(&mut trial, sigma_floor);
            let (tr, tj) = problem.evaluate(&trial);
            let tchi2 = tr.norm_squared();
            if tchi2 <= chi2 {
                let rel = (chi2 - tchi2) / chi2.max(1e-300);
                let moved = trial
                    .iter()
                    .zip(&p)
                    .take(3)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                p = trial;
                r = tr;
                jac = tj;
                chi2 = tchi2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 || moved < 1e-10 * p[2] {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step left: at a minimum up to round-off
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {iterations} iterations (chi2 {chi2:.4e}, lambda {lambda:.1e}, params {p:?})"
        )));
    }
    let (mu0, mu1, sigma) = (p[0], p[1], p[2]);
    if (mu1 - mu0).abs() < 0.05 * sigma {
        return Err(Error::Degenerate(format!(
            "fitted centres {mu0:.6e} and {mu1:.6e} coincide within the width {sigma:.3e}"
        )));
    }
    Ok(DoubleGaussianFit {
        mu0,
        mu1,
        sigma,
        weights: p[3..].to_vec(),
        chi2,
        dof: problem.rows().saturating_sub(np),
        iterations,
        bins: hist.bins(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn mixture(n: usize, mu0: f64, mu1: f64, sigma: f64, w: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g0 = Normal::new(mu0, sigma).unwrap();
        let g1 = Normal::new(mu1, sigma).unwrap();
        (0..n)
            .map(|i| if (i as f64) < w * n as f64 { g1.sample(&mut rng) } else { g0.sample(&mut rng) })
            .collect()
    }

    #[test]
    fn bin_mass_derivatives() {
        let (a, b, mu, s) = (0.3, 0.7, 0.1, 0.9);
        let h = 1e-6;
        let (m, dmu, ds) = bin_mass(a, b, mu, s);
        let fd_mu = (bin_mass(a, b, mu + h, s).0 - bin_mass(a, b, mu - h, s).0) / (2.0 * h);
        let fd_s = (bin_mass(a, b, mu, s + h).0 - bin_mass(a, b, mu, s - h).0) / (2.0 * h);
        assert!(m > 0.0);
        assert!((dmu - fd_mu).abs() < 1e-8);
        assert!((ds - fd_s).abs() < 1e-8);
    }

    #[test]
    fn joint_fit_recovers_parameters() {
        let d0 = mixture(100_000, -2.0, 2.0, 1.0, 0.02, 1);
        let d1 = mixture(100_000, -2.0, 2.0, 1.0, 0.95, 2);
        let fit = fit_double_gaussian(&[&d0, &d1], None).unwrap();
        assert!((fit.mu0 + 2.0).abs() < 0.005 * 4.0, "{fit:?}");
        assert!((fit.mu1 - 2.0).abs() < 0.005 * 4.0, "{fit:?}");
        assert!((fit.sigma - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.weights[0] - 0.02).abs() < 0.003);
        assert!((fit.weights[1] - 0.95).abs() < 0.003);
    }

    #[test]
    fn relaxation_tail_still_converges() {
        use rand::Rng;
        let d0 = mixture(20_000, -2.0, 2.0, 1.0, 0.0, 6);
        let mut d1 = mixture(20_000, -2.0, 2.0, 1.0, 1.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 1.0).unwrap();
        for v in d1.iter_mut().take(400) {
            *v = -2.0 + 4.0 * rng.random::<f64>() + noise.sample(&mut rng);
        }
        let fit = fit_double_gaussian(&[&d0, &d1], None).unwrap();
        assert!(fit.weights[0] < 0.01, "{fit:?}");
        assert!((fit.separation() - 4.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn single_gaussian_has_no_second_peak() {
        let d0 = mixture(100_000, 0.0, 0.0, 1.0, 0.0, 3);
        let fit = fit_double_gaussian(&[&d0], Some([0.0, 4.0])).unwrap();
        assert!(fit.weights[0] < 1e-3, "{fit:?}");
        assert!(fit.mu0.abs() < 0.02);
    }

    #[test]
    fn equal_means_flagged() {
        let d0 = mixture(20_000, 1.0, 1.0, 0.5, 0.0, 4);
        let d1 = mixture(20_000, 1.0, 1.0, 0.5, 0.0, 5);
        assert!(matches!(fit_double_gaussian(&[&d0, &d1], None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_samples() {
        let d = vec![0.0; 10];
        assert!(matches!(fit_double_gaussian(&[&d], None), Err(Error::Invalid { .. })));
    }

    #[test]
    fn histogram_csv_header_and_counts() {
        let d0 = mixture(5000, 0.0, 3.0, 1.0, 0.0, 6);
        let d1 = mixture(5000, 0.0, 3.0, 1.0, 1.0, 7);
        let h = Histogram::freedman_diaconis(&[&d0, &d1]).unwrap();
        assert_eq!(h.counts[0].iter().sum::<u64>(), 5000);
        assert_eq!(h.counts[1].iter().sum::<u64>(), 5000);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin_center,count_prep0,count_prep1\n"));
        assert_eq!(text.lines().count(), h.bins() + 1);
    }
}
