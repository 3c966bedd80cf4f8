//! Analytic readout pulses that leave a dispersively coupled resonator empty
//! at the end of the measurement, together with the tools used to check them:
//! a linear response engine, a semiclassical Kerr cavity simulator, a
//! single-shot Monte Carlo with matched-filter integration, and the
//! calibration fits used to relate detected power to photon number.
//!
//! Conventions used throughout the crate:
//!
//! * All internal rates and frequencies are angular (rad/s) and live in the
//!   frame rotating at the readout carrier. Configuration files carry
//!   ordinary frequencies in Hz (see [`model::config`]).
//! * Intra-cavity fields are in units of √photons, so `|a(t)|²` is the mean
//!   photon number. Propagating fields (`a_in`, `a_out`) are in √(photons/s).
//! * Fourier convention: `a(t) = ∫ a(ω) e^{-iωt} dω`. With it the cavity obeys
//!   `da/dt = -(κ/2 + iχ_j) a + √κ a_in` and its transfer function is
//!   `h_j(ω) = √κ / (κ/2 - i(ω - χ_j))`.

pub mod dynamics;
pub mod error;
pub mod measurement;
pub mod model;
pub mod response;
pub mod synthesis;

pub(crate) mod stepper;

pub use error::{Error, Result};
pub use model::{
    BranchSet, Config, DetectionChain, ResonatorParams, StateBranch, TrialFunction, Waveform,
};
