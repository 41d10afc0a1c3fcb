//! Capital allocation for max-type bank capital cost functions and the
//! reduced-form local capital optimization built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! * [`portfolio`]: business units, capital components, legal-entity trees.
//! * [`permutation`]: exact and Monte Carlo Shapley allocation of any [`SetCost`].
//! * [`cost`]: concrete cost functions (additive max, nested legal-entity max,
//!   historical VaR, linearized surrogate).
//! * [`allocation`]: standalone, Euler, and the normal-approximation linear
//!   allocations with their exchange rates.
//! * [`optimizer`]: covariance models, exchange-rate Jacobian and the
//!   equality-constrained mean-variance solvers.
//! * [`experiments`] and [`report`]: reproducible CSV artifacts.

pub mod allocation;
pub mod cost;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod permutation;
pub mod portfolio;
pub mod report;
pub mod stats;

pub use allocation::{
    dominance_probability, euler_allocation, hierarchy_allocation, hierarchy_joint_probabilities,
    linear_max_allocation, standalone_allocation, two_function_allocation, ComponentAllocation,
    DominanceStats, ExchangeRates, JointProbabilities, LinearMaxAllocation, Method,
};
pub use cost::{
    AdditiveMaxCost, HierarchyComponents, LinearizedCost, NestedMaxCost, PnLMatrix, VarCost,
};
pub use error::{Error, Result};
pub use optimizer::{
    estimate_covariance, exchange_rate_jacobian, kkt_residual, solve_crude, solve_local_optimum,
    synthetic_covariance, AllocationModel, CovarianceModel, OptimizationProblem,
    OptimizationSolution,
};
pub use permutation::{exact_shapley, indicator_moments, mc_shapley, AllocationEstimate, SetCost};
pub use portfolio::{BusinessUnit, CapitalRatios, LegalEntityTree, Portfolio};
