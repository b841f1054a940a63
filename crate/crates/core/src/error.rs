use thiserror::Error;

use crate::problem::Hypothesis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field belongs to a different mesh")]
    MeshMismatch,

    #[error("expected {expected} nodal values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("operation undefined for the zero field")]
    ZeroField,

    #[error("weighted q-mass vanishes")]
    ZeroMass,

    #[error("cone shift root not bracketed in [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("cannot seed the cone: {0}")]
    SeedUnavailable(String),

    #[error("scaling denominator lambda*T3 - T2 = {denominator} is not positive")]
    ScaleDenominator { denominator: f64 },

    #[error("no probe admits a Nehari scaling at lambda = {lambda}")]
    NoScalingWitness { lambda: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("coercive minimization ended with J >= 0 at every restart (lambda = {lambda} may not exceed lambda1)")]
    SuspectBelowThreshold { lambda: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular matrix (pivot {pivot:e} at row {row})")]
    SingularMatrix { row: usize, pivot: f64 },

    #[error("hypotheses violated: {0:?}")]
    Hypotheses(Vec<Hypothesis>),

    #[error("lambda = 0 is handled by the constant eigenpair, not by minimization")]
    UseZeroEigenpair,

    #[error("lambda = {lambda} lies outside the certified interval (0, {lambda1}]")]
    OutsideCertifiedInterval { lambda: f64, lambda1: f64 },

    #[error("probe quotient {quotient} undercuts lambda1 = {lambda1}")]
    ThresholdViolated { quotient: f64, lambda1: f64 },

    #[error("residual NaN in gradient terms")]
    NanResidual,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
