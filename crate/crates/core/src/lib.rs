//! Finite-state mean field games with controlled jump intensities.
//!
//! The crate solves the backward HJB / forward Kolmogorov fixed point for a
//! population flow, computes the contraction horizon, checks monotonicity,
//! evaluates exact `N`-player Nash gaps on the count-compressed joint chain
//! and runs coupled Monte Carlo simulations of the `N`-player system against
//! its mean field limit.

pub mod builtin;
pub mod error;
pub mod flow;
pub mod forward;
pub mod hamiltonian;
pub mod hjb;
pub mod mc;
pub mod mfg;
pub mod model;
pub mod nplayer;
pub mod simplex;
pub mod stats;

pub use error::{MfgError, Result};
pub use flow::{flow_lipschitz_check, fmt_f64, LipschitzReport, MeasureFlow, TimeGrid};
pub use forward::{mass_conservation_check, solve_forward, ForwardInput, MassReport};
pub use hamiltonian::{generator_apply, minimize_hamiltonian, pre_hamiltonian, HamiltonianValue};
pub use hjb::{evaluate_cost, evaluate_policy, hjb_residual, solve_hjb, FeedbackPolicy, ValueFunction};
pub use model::{validate_model, Action, Family, Model, ModelConstants, ModelSpec};
pub use simplex::{simplex_distance, Simplex};
