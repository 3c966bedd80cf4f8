//! Linear cavity response: state-conditional transfer functions and three
//! independent ways of pushing an input envelope through the cavity.
//!
//! With the `e^{-iωt}` convention the branch-`j` cavity has
//! `h_j(ω) = √κ / (κ/2 - i(ω - χ_j))` and impulse response
//! `h_j(t) = √κ e^{-(κ/2 + iχ_j) t}` for `t >= 0`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionChain, StateBranch, Waveform};
use crate::stepper::{self, Coeffs, Rk4, CUBIC_BASIS};

/// Default internal oversampling of the ODE integrator.
pub const DEFAULT_OVERSAMPLE: usize = 10;

/// Largest `dt·max(κ/2, |χ|)` accepted by the convolution and spectral
/// methods.
const SAMPLED_BOUND: f64 = 0.5;

/// Zero-padding factor of the spectral method.
const SPECTRAL_PAD: usize = 4;

/// Largest tolerated energy fraction in the last padded block.
const SPECTRAL_TAIL_LIMIT: f64 = 1e-10;

/// One branch of the cavity seen as a linear filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchResponse {
    pub branch: StateBranch,
    pub kappa: f64,
}

impl BranchResponse {
    pub fn new(branch: StateBranch, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::invalid("kappa", "must be positive and finite"));
        }
        Ok(Self { branch, kappa })
    }

    /// `κ/2 + iχ_j`, the decay pole of the branch.
    pub fn pole(&self) -> Complex64 {
        Complex64::new(0.5 * self.kappa, self.branch.chi)
    }
}

pub fn transfer_fd(omega: f64, resp: &BranchResponse) -> Complex64 {
    let k = resp.kappa;
    k.sqrt() / Complex64::new(0.5 * k, -(omega - resp.branch.chi))
}

/// Causal impulse response; `t = 0` returns the right limit `√κ`.
pub fn impulse_response_td(t: f64, resp: &BranchResponse) -> Complex64 {
    if t < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    resp.kappa.sqrt() * (-resp.pole() * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Duhamel integral against the sampled impulse response, with the
    /// causal cubic input interpolant integrated exactly.
    Convolution,
    /// Multiplication by `h_j(ω)` on a zero-padded FFT grid.
    Spectral,
    /// Fixed-step RK4 of the equation of motion.
    Ode,
}

/// Intra-cavity field produced by `a_in`, starting from an empty cavity at
/// the first sample. The Kerr constant of the branch is ignored.
pub fn propagate_linear(a_in: &Waveform, resp: &BranchResponse, method: Method) -> Result<Waveform> {
    propagate_linear_with(a_in, resp, method, DEFAULT_OVERSAMPLE)
}

pub fn propagate_linear_with(
    a_in: &Waveform,
    resp: &BranchResponse,
    method: Method,
    oversample: usize,
) -> Result<Waveform> {
    let samples = match method {
        Method::Convolution => {
            check_sampled_grid(a_in.dt(), resp)?;
            convolve(a_in, resp)
        }
        Method::Spectral => {
            check_sampled_grid(a_in.dt(), resp)?;
            spectral(a_in, resp)?
        }
        Method::Ode => {
            let coeffs = Coeffs::new(&resp.branch.linear(), resp.kappa);
            let mut out = vec![Complex64::new(0.0, 0.0); a_in.len()];
            Rk4::new(oversample).run(
                a_in.samples(),
                a_in.dt(),
                0,
                Complex64::new(0.0, 0.0),
                &mut out,
                |_| coeffs,
            )?;
            out
        }
    };
    Waveform::new(samples, a_in.dt(), a_in.t0())
}

fn check_sampled_grid(dt: f64, resp: &BranchResponse) -> Result<()> {
    let rate = (0.5 * resp.kappa).max(resp.branch.chi.abs());
    if dt * rate > SAMPLED_BOUND {
        return Err(Error::GridTooCoarse {
            dt,
            required_dt: SAMPLED_BOUND / rate,
        });
    }
    Ok(())
}

/// `∫₀¹ uᵖ e^{-μ(1-u)} du` by its power series in `μ` (`|μ| <= 1` here).
fn exp_moment(p: usize, mu: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0 / (p + 1) as f64, 0.0);
    let mut sum = term;
    for r in 0..60 {
        term *= -mu / (r + p + 2) as f64;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

fn convolve(a_in: &Waveform, resp: &BranchResponse) -> Vec<Complex64> {
    let x = a_in.samples();
    let n = x.len();
    let dt = a_in.dt();
    let mu = resp.pole() * dt;
    let moments: Vec<Complex64> = (0..4).map(|p| exp_moment(p, mu)).collect();
    // Weight of each stencil sample in the interval source term.
    let scale = resp.kappa.sqrt() * dt;
    let weights: Vec<Complex64> = CUBIC_BASIS
        .iter()
        .map(|c| scale * c.iter().zip(&moments).map(|(&ci, &m)| ci * m).sum::<Complex64>())
        .collect();
    let source: Vec<Complex64> = (0..n)
        .map(|k| {
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let s = stepper::stencil(x, k);
            s.iter().zip(&weights).map(|(a, w)| a * w).sum()
        })
        .collect();
    let kernel: Vec<Complex64> = (0..n).map(|m| (-mu * m as f64).exp()).collect();
    (0..n)
        .map(|k| (1..=k).map(|j| kernel[k - j] * source[j]).sum())
        .collect()
}

fn spectral(a_in: &Waveform, resp: &BranchResponse) -> Result<Vec<Complex64>> {
    let n = a_in.len();
    let m = SPECTRAL_PAD * n;
    let mut buf = a_in.samples().to_vec();
    buf.resize(m, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let df = TAU / (m as f64 * a_in.dt());
    for (k, z) in buf.iter_mut().enumerate() {
        let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        // A forward FFT bin k carries e^{+iωt} with ω = -2πk/(m·dt).
        *z *= transfer_fd(-signed * df, resp);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let norm = 1.0 / m as f64;
    let total: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    let tail: f64 = buf[m - n..].iter().map(|z| z.norm_sqr()).sum();
    if total > 0.0 && tail > SPECTRAL_TAIL_LIMIT * total {
        return Err(Error::SpectralWraparound {
            tail_fraction: tail / total,
        });
    }
    Ok(buf[..n].iter().map(|z| z * norm).collect())
}

/// `α e^{-iφ} a_in + β e^{-iθ} a`, sample by sample.
pub fn output_field(a: &Waveform, a_in: &Waveform, chain: &DetectionChain) -> Result<Waveform> {
    let direct = chain.direct_gain();
    let cavity = chain.cavity_gain();
    a.zip_with(a_in, |field, drive| direct * drive + cavity * field)
}
