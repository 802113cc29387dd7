//! Simulation and numerical verification of fully coupled two-time-scale
//! regime-switching diffusions: a slow diffusion with √ε noise driven by a
//! fast countable-state Markov chain whose rates depend on the slow state.
//!
//! The crate provides:
//!
//! * [`chain`] — state-dependent generators, truncation, invariant
//!   measures, semigroup rows, total-variation decay and ergodic-rate fits;
//! * [`models`] — built-in generator families and slow-coefficient sets;
//! * [`skorokhod`] — the interval-layout representation of state-dependent
//!   jump chains and the shared-mark coupling it induces;
//! * [`sim`] — event-driven simulation of the coupled system
//!   (Euler-Maruyama slow process, exact thinned fast chain);
//! * [`averaging`] — the averaged drift, its ODE, and L¹/weak convergence
//!   experiments;
//! * [`regularity`] — numerical probes of `x ↦ π^x` regularity, including
//!   the non-Hölder blow-up table;
//! * [`cli`] — the `twoscale` command-line entry point with deterministic
//!   CSV reporting.
//!
//! Every random quantity derives from a single 64-bit seed through
//! splittable counter-based streams ([`rng::Stream`]), so outputs are
//! byte-identical across runs and thread counts.
//!
//! ```
//! use twoscale::{invariant_measure, make_generator, truncate};
//! use twoscale::models::{FamilyName, GeneratorParams};
//!
//! // Birth-death chain with birth rate x and unit death rate: the
//! // stationary law is geometric with ratio x.
//! let family = make_generator(FamilyName::BdExample21, &GeneratorParams::default())?;
//! let chain = truncate(&family, &[0.5], 200)?;
//! let pi = invariant_measure(&chain, 1e-10)?;
//! assert!((pi.weight(1) - 0.5).abs() < 1e-9);
//! assert!((pi.weight(2) - 0.25).abs() < 1e-9);
//! # Ok::<(), twoscale::Error>(())
//! ```

// Guards written as `!(x > 0.0)` are deliberate: they reject NaN along
// with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod chain;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod models;
pub mod regularity;
pub mod report;
pub mod rng;
pub mod sim;
pub mod skorokhod;

pub use chain::{
    check_drift_condition, ell1_distance, fit_ergodic_rate, fit_ergodic_rate_probed,
    integration_by_parts_residual, invariant_measure, total_variation, transition_kernel, truncate,
    ErgodicRateFit, GeneratorFamily, ProbabilityVector, State, StateSpace, TruncatedChain,
};
pub use error::{Error, Result};
pub use models::{
    make_generator, make_model, FamilyName, GeneratorParams, ModelName, ModelParams,
    SlowCoefficients, TwoScaleModel,
};
