//! Nonlinear autoregressions with unit-root-like tails: simulation,
//! drift-condition verification, and ergodicity-rate certification.
//!
//! The crate is organized around a pipeline:
//!
//! * [`model`] — AR(p) model families (time-varying intercept / slope,
//!   smooth-transition nonlinearities), error distributions, and the
//!   one-step transition.
//! * [`companion`] — companion-form matrices and the weighted vector norm
//!   under which the stable block is a strict contraction.
//! * [`drift`] — Lyapunov functions, envelope checks, and a Monte Carlo
//!   verifier for the one-step drift inequality.
//! * [`classify`] — maps model structure and error moment class to an
//!   ergodicity-rate certificate (geometric / subexponential / polynomial)
//!   with β-mixing and moment implications.
//! * [`sim`] — trajectory simulation, autocorrelations, ensemble
//!   total-variation decay diagnostics, and empirical rate fitting.
//! * [`config`] — the plain-text model spec file format used by the CLI.
//!
//! Monte Carlo loops run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration without it; results are
//! identical either way because every task owns a counter-based random
//! stream derived from (seed, task index).

// validators use the negated form `!(x > 0.0)` on purpose: it rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod companion;
pub mod config;
pub mod drift;
mod exec;
pub mod mat;
pub mod model;
pub mod rng;
pub mod sim;

pub use classify::{classify, classify_model, check_condition_h, RateCertificate};
pub use companion::{build_companion, CompanionForm, ZSplit};
pub use drift::{check_g_envelope, verify_drift, DriftReport, DriftSpec, EnvelopeCertificate};
pub use model::{decompose_unit_root, ModelSpec, NoiseSpec, NonlinearTerm};
pub use rng::Stream;
pub use sim::{acf, ensemble_tv, fit_mixing_rate, simulate, MixingReport, Trajectory};
