//! Finite-element solver for the eigenvalue problem of the negative
//! (p,q)-Laplacian with weighted volume and boundary mass terms.
//!
//! Everything is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the `*64` aliases at the crate root fix the scalar to `f64`,
//! which is what the solvers are tuned for.

// NaN must fail every guard, which `!(a > b)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod functionals;
pub mod lambda1;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod scalar;
mod solver;
pub mod spectrum;

pub use error::{Error, Result};
pub use functionals::{
    ab_norm, cone_residual, energy_j_lambda, evaluate, nehari_residual, nehari_scale, normalize_mass,
    project_to_cone, rayleigh_pq, rayleigh_q, relative_weak_residual, scaled_cone_residual, weak_residual,
    FunctionalValues,
};
pub use lambda1::{check_consistency, solve_lambda1, solve_lambda_1q, ConsistencyReport, KktReport, ThresholdResult};
pub use mesh::{
    boundary_power_integral, build_interval_mesh, build_rectangle_mesh, gradient_power_integral,
    volume_power_integral, DiscreteField, Mesh, MeshId,
};
pub use problem::{
    bump_pair_seed, validate_problem, validate_q_problem, weight_from_expression, Hypothesis, ProblemSpec,
    ValidationReport, WeightExpr, WeightTarget,
};
pub use scalar::Real;
pub use solver::{mix_seed, SolverOptions};
pub use spectrum::{
    certify_nonexistence, kkt_check, solve_coercive, solve_nehari, zero_eigenpair, CaseTag, EigenPair, KktCheckReport,
    NonexistenceCertificate,
};

pub type Mesh64 = Mesh<f64>;
pub type Field64 = DiscreteField<f64>;
pub type Spec64 = ProblemSpec<f64>;
pub type Values64 = FunctionalValues<f64>;
pub type Options64 = SolverOptions<f64>;
pub type Threshold64 = ThresholdResult<f64>;
pub type EigenPair64 = EigenPair<f64>;
pub type Certificate64 = NonexistenceCertificate<f64>;
