//! Modeling toolkit for charge-state control and spin readout of the diamond
//! nitrogen-vacancy (NV) center under multicolor illumination.
//!
//! The crate covers five analytic layers and a stochastic oracle:
//!
//! - [`charge`] — two-state ionization/recombination dynamics with multiphoton
//!   rate models, closed-form evolution, steady states, and the NIR-only
//!   equilibrium under a destructive readout.
//! - [`photon`] — two-component Poisson photon statistics for charge readout:
//!   pmf, threshold classification, charge fidelity, and post-selection purity.
//! - [`scc`] — six-level transfer-matrix model of repeated shelve-and-ionize
//!   spin-to-charge conversion, producing the spin-conditioned detection
//!   probabilities (β₀, β₁).
//! - [`metrics`] — readout figures of merit: threshold SNR, spin fidelity,
//!   shot-noise-aware single-shot SNR, PL SNR, spin-readout noise σ_R, and
//!   cross-technique conversions.
//! - [`protocol`] — time-averaged measurement planning: count-rate saturation
//!   model with power/readout-time scaling, total integration time, readout
//!   optimization, and SCC-vs-PL speedup.
//! - [`estimation`] — parameter recovery: weighted linear least squares,
//!   Levenberg-Marquardt nonlinear fits, Poisson-mixture EM, and rate
//!   extraction from transition counts.
//! - [`sim`] — seeded, thread-count-independent Monte Carlo simulation of
//!   pulse sequences, charge readout histograms, rate experiments, and the
//!   per-shot SCC process.
//!
//! Unit conventions: optical powers in mW (CLI flags expose µW for visible
//! beams), rates in kHz (1 kcps ≡ 1 count/ms), times in ms unless a field name
//! says otherwise (timing budgets are µs, singlet lifetimes ns).
//!
//! Start with the runnable examples (`cargo run --example steady_state_sweep`,
//! etc.); the `nv-readout` binary exposes the same operations as subcommands.

pub mod charge;
pub mod estimation;
pub mod metrics;
pub mod photon;
pub mod profile;
pub mod protocol;
pub mod scc;
pub mod sim;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input violates an operation's domain (negative power, probability
    /// outside [0, 1], non-positive denominator, ...).
    Domain(String),
    /// The requested quantity is not uniquely defined for these inputs.
    Degenerate(String),
    /// A fit was requested with fewer data points than free parameters allow.
    Underdetermined { needed: usize, got: usize },
    /// A JSON document failed schema or unit validation.
    Schema(String),
    /// A stochastic simulation could not be carried out.
    Simulation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate: {msg}"),
            Error::Underdetermined { needed, got } => {
                write!(f, "underdetermined fit: {got} points, need at least {needed}")
            }
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Simulation(msg) => write!(f, "simulation error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
