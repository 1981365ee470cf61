//! First-order splitting analysis for chains of penduli coupled to rotators.
//!
//! The model is the product of n penduli P_i = s_i (p_i^2/2 + V_i(q_i)) with a
//! d-dimensional rotator h0(I) and a linear clock driver, perturbed by a small
//! vector field eps X^1. This crate computes the Melnikov potential and vector
//! of the perturbation, locates their non-degenerate critical points, and
//! verifies the first-order predictions (invariant-graph splitting and the
//! action jump along a homoclinic excursion) by direct numerical integration.

pub mod error;
pub mod expr;
pub mod melnikov;
pub mod model;
pub mod quad;
pub mod rk;
pub mod separatrix;
pub mod verify;

pub use error::{Error, Result};
pub use expr::{Expr, Factor, Term, Var};
pub use melnikov::{
    additivity_gap, effective_tau_period, find_critical_tau, find_critical_tau_scan,
    grad_angle_potential, grad_tau_potential, melnikov_integrand_vector, melnikov_potential,
    melnikov_vector, partial_potential, reduced_potential, CriticalPoint, NewtonOptions,
    PhasePoint, ReducedSample,
};
pub use model::{
    circle_diff, circle_dist, wrap_angle, AugmentedState, ClockDriver, ClockKind, DomainSpec, PenduliSpec,
    Perturbation, Potential, PotentialTerm, RotatorSpec, SystemConfig,
};
pub use quad::MelnikovValue;
pub use separatrix::{build_separatrix, build_separatrix_with_branches, SeparatrixOrbit};
pub use verify::{
    action_jump, chart_to_state, integrate, measure_splitting, order_fit, stable_graph_value,
    state_to_chart, unstable_graph_value, GraphPoint, IntegratorConfig, JumpReport, OrderFit,
    SplittingReport,
};
