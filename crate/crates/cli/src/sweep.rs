//! Threshold computation followed by a per-lambda dispatch over the grid.

use std::fmt;
use std::time::Instant;

use pq_spectra::{
    certify_nonexistence, check_consistency, kkt_check, mix_seed, solve_coercive, solve_lambda1, solve_nehari,
    zero_eigenpair, CaseTag, Certificate64, ConsistencyReport, EigenPair64, Error as CoreError, Field64, Threshold64,
};
use rayon::prelude::*;

use crate::config::RunPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    EigenvalueZero,
    NoSolution,
    BoundaryExcluded,
    Eigenpair,
    /// The solver for this row failed; the row proves nothing either way.
    Failed,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::EigenvalueZero => "eigenvalue_zero",
            Status::NoSolution => "no_solution",
            Status::BoundaryExcluded => "boundary_excluded",
            Status::Eigenpair => "eigenpair",
            Status::Failed => "failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub status: Status,
    pub case_tag: Option<CaseTag>,
    pub j_value: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub weak_residual: Option<f64>,
    pub cone_residual: Option<f64>,
    pub m_lambda: Option<f64>,
    pub iterations: usize,
    pub wall_ms: u64,
    pub certificate: Option<Certificate64>,
    pub eigenfunction: Option<Field64>,
    pub message: Option<String>,
}

impl SweepRow {
    fn empty(lambda: f64, status: Status) -> Self {
        Self {
            lambda,
            status,
            case_tag: None,
            j_value: None,
            t1: None,
            t2: None,
            t3: None,
            weak_residual: None,
            cone_residual: None,
            m_lambda: None,
            iterations: 0,
            wall_ms: 0,
            certificate: None,
            eigenfunction: None,
            message: None,
        }
    }

    fn from_pair(pair: EigenPair64) -> Self {
        let status = if pair.case_tag == CaseTag::Zero { Status::EigenvalueZero } else { Status::Eigenpair };
        Self {
            case_tag: Some(pair.case_tag),
            j_value: Some(pair.values.j_lambda),
            t1: Some(pair.values.t1),
            t2: Some(pair.values.t2),
            t3: Some(pair.values.t3),
            weak_residual: Some(pair.weak_residual_norm),
            cone_residual: Some(pair.cone_residual),
            m_lambda: pair.m_lambda,
            iterations: pair.iterations,
            eigenfunction: Some(pair.field),
            ..Self::empty(pair.lambda, status)
        }
    }

    fn failed(lambda: f64, err: impl fmt::Display) -> Self {
        Self { message: Some(err.to_string()), ..Self::empty(lambda, Status::Failed) }
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub nodes: usize,
    pub elements: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub threshold: Threshold64,
    pub consistency: Result<ConsistencyReport<f64>, String>,
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("lambda_1 did not converge: {0}")]
    Threshold(CoreError),
    #[error("invalid problem: {0}")]
    Invalid(CoreError),
}

impl SweepError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::Threshold(_) => 3,
            SweepError::Invalid(_) => 2,
        }
    }
}

/// Computes `lambda_1` alone, mapping failures onto exit codes.
pub fn compute_threshold(plan: &RunPlan) -> Result<Threshold64, SweepError> {
    solve_lambda1(&plan.spec, &plan.solver_opts).map_err(|e| match e {
        CoreError::Hypotheses(_) | CoreError::InvalidExponent(_) => SweepError::Invalid(e),
        other => SweepError::Threshold(other),
    })
}

pub fn run_sweep(plan: &RunPlan) -> Result<SweepReport, SweepError> {
    let threshold = compute_threshold(plan)?;
    let consistency =
        check_consistency(&plan.spec, &threshold, plan.consistency_samples, &plan.solver_opts).map_err(|e| e.to_string());
    let lambdas = plan.lambda_grid.resolve(threshold.lambda1);
    let rows = lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let start = Instant::now();
            let mut row = solve_row(plan, &threshold, lambda, k as u64);
            if plan.outputs.timings {
                row.wall_ms = start.elapsed().as_millis() as u64;
            }
            row
        })
        .collect();
    Ok(SweepReport {
        threshold,
        consistency,
        rows,
        provenance: Provenance {
            config_hash: plan.config_hash.clone(),
            nodes: plan.spec.node_count(),
            elements: plan.spec.mesh.elements().len(),
            seed: plan.seed(),
        },
    })
}

fn solve_row(plan: &RunPlan, threshold: &Threshold64, lambda: f64, index: u64) -> SweepRow {
    let spec = &plan.spec;
    let opts = plan.solver_opts.with_seed(mix_seed(plan.seed(), index));
    let lambda1 = threshold.lambda1;
    if lambda == 0.0 {
        return SweepRow::from_pair(zero_eigenpair(spec));
    }
    if lambda <= lambda1 * (1.0 + opts.boundary_tol) {
        return match certify_nonexistence(spec, lambda, threshold, &opts) {
            Ok(cert) => {
                let status = if cert.boundary_case { Status::BoundaryExcluded } else { Status::NoSolution };
                SweepRow { certificate: Some(cert), ..SweepRow::empty(lambda, status) }
            }
            Err(e) => SweepRow::failed(lambda, e),
        };
    }
    let solved = if spec.p < spec.q {
        solve_nehari(spec, lambda, threshold, &opts)
    } else {
        solve_coercive(spec, lambda, threshold, &opts)
    };
    let pair = match solved {
        Ok(pair) => pair,
        Err(e) => return SweepRow::failed(lambda, e),
    };
    // Independent re-verification; only verified pairs are reported.
    match kkt_check(spec, lambda, &pair.field, &opts) {
        Ok(check) if check.passed => SweepRow::from_pair(pair),
        Ok(check) => SweepRow::failed(
            lambda,
            format!(
                "verification failed: weak residual {:e}, cone residual {:e}, mass identity defect {:e}",
                check.weak_residual_norm, check.cone_residual, check.mass_identity_defect
            ),
        ),
        Err(e) => SweepRow::failed(lambda, e),
    }
}
