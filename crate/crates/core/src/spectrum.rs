//! Eigenpairs above the threshold, the zero eigenpair, nonexistence
//! certificates below it, and independent verification of candidates.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{
    cone_gradient, fibering_scale, mass_terms, project_raw, rayleigh_q_raw, sup, values_raw, weak_parts,
    FunctionalValues,
};
use crate::lambda1::{KktReport, ThresholdResult};
use crate::mesh::{min_max, DiscreteField};
use crate::problem::{bump_pair_seed, ProblemSpec};
use crate::scalar::Real;
use crate::solver::{descend, least_squares, polish_energy, random_cone_field, rng, DescentProblem, Operators, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    Zero,
    Nehari,
    Coercive,
}

impl CaseTag {
    pub fn label(self) -> &'static str {
        match self {
            CaseTag::Zero => "zero",
            CaseTag::Nehari => "nehari",
            CaseTag::Coercive => "coercive",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub lambda: T,
    pub field: DiscreteField<T>,
    /// Relative sup-norm of the weak residual over all nodal test functions.
    pub weak_residual_norm: T,
    /// Scaled cone residual `|g| / int (a+b)|u|^(q-1)`.
    pub cone_residual: T,
    /// `T1 + T2 - lambda T3`; reported for the Nehari case only.
    pub nehari_residual: Option<T>,
    pub values: FunctionalValues<T>,
    /// Minimum of `J_lambda` on the Nehari manifold.
    pub m_lambda: Option<T>,
    pub case_tag: CaseTag,
    pub iterations: usize,
    pub kkt: Option<KktReport<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonexistenceCertificate<T> {
    pub lambda: T,
    pub lambda1_ref: T,
    /// `lambda1_ref - lambda`, clamped at zero for the boundary case.
    pub margin: T,
    /// Smallest q-Rayleigh quotient over all probes.
    pub min_quotient: T,
    pub probe_count: usize,
    pub boundary_case: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCheckReport<T> {
    pub lambda: T,
    pub weak_residual_norm: T,
    pub cone_residual: T,
    /// `|lambda - R_q(u) - T1/T3|` relative to `max(lambda, T1/T3)`; zero at
    /// `lambda = 0`, where the identity does not apply.
    pub mass_identity_defect: T,
    pub nonconstant: bool,
    pub passed: bool,
}

fn scaled_g<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> T {
    let m = mass_terms(spec, u);
    if m.g_scale > T::zero() {
        m.g.abs() / m.g_scale
    } else {
        m.g.abs()
    }
}

fn is_nonconstant<T: Real>(u: &[T]) -> bool {
    let (lo, hi) = min_max(u);
    hi - lo > T::c(1e-6) * sup(u)
}

/// Weak-form verification of `(lambda, candidate)` against every nodal test
/// function, independent of how the candidate was produced.
pub fn kkt_check<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    candidate: &DiscreteField<T>,
    opts: &SolverOptions<T>,
) -> Result<KktCheckReport<T>> {
    candidate.check_mesh(&spec.mesh)?;
    if candidate.is_zero() {
        return Err(Error::ZeroField);
    }
    let u = candidate.values();
    let parts = weak_parts(spec, u);
    let residual = parts.relative_residual(lambda);
    if residual.is_nan() {
        return Err(Error::NanResidual);
    }
    let cone = scaled_g(spec, u);
    let nonconstant = is_nonconstant(u);
    let v = values_raw(spec, lambda, u);
    let defect = if lambda == T::zero() || !(v.t3 > T::zero()) {
        T::zero()
    } else {
        let ratio = v.t1 / v.t3;
        (lambda - v.t2 / v.t3 - ratio).abs() / lambda.abs().max(ratio)
    };
    let passed = if lambda == T::zero() {
        residual <= opts.tol
    } else {
        residual <= opts.tol && cone <= opts.tol && defect <= opts.tol && nonconstant && v.t3 > T::zero()
    };
    Ok(KktCheckReport { lambda, weak_residual_norm: residual, cone_residual: cone, mass_identity_defect: defect, nonconstant, passed })
}

/// `lambda = 0` with the constant eigenfunction `u = 1`.
pub fn zero_eigenpair<T: Real>(spec: &ProblemSpec<T>) -> EigenPair<T> {
    let u = vec![T::one(); spec.node_count()];
    let parts = weak_parts(spec, &u);
    EigenPair {
        lambda: T::zero(),
        weak_residual_norm: parts.relative_residual(T::zero()),
        cone_residual: scaled_g(spec, &u),
        nehari_residual: None,
        values: values_raw(spec, T::zero(), &u),
        m_lambda: None,
        case_tag: CaseTag::Zero,
        iterations: 0,
        kkt: None,
        field: spec.field_unchecked(u),
    }
}

/// Certifies that no eigenvalue lies at `lambda` in `(0, lambda1]`: every
/// probe cone field has q-quotient at least `lambda1 - tol`, so no field can
/// satisfy `lambda - R_q(u) = T1/T3 > 0`.
pub fn certify_nonexistence<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    threshold: &ThresholdResult<T>,
    opts: &SolverOptions<T>,
) -> Result<NonexistenceCertificate<T>> {
    let lambda1 = threshold.lambda1;
    if !(lambda > T::zero()) {
        return Err(Error::Precondition(format!("certificates need lambda > 0, got {lambda}")));
    }
    if lambda > lambda1 * (T::one() + opts.boundary_tol) {
        return Err(Error::OutsideCertifiedInterval { lambda: lambda.to_f64_lossy(), lambda1: lambda1.to_f64_lossy() });
    }
    let boundary_case = (lambda - lambda1).abs() <= opts.boundary_tol * lambda1;
    let ops = Operators::new(spec)?;
    let probes: Vec<T> = (0..opts.probes)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(opts.seed, 500 + k as u64);
            random_cone_field(spec, &ops, &mut r, k % 2 == 0).map(|v| rayleigh_q_raw(spec, &v))
        })
        .collect::<Result<_>>()?;
    let min_quotient = probes
        .iter()
        .chain(&threshold.restart_values)
        .chain(std::iter::once(&rayleigh_q_raw(spec, threshold.minimizer.values())))
        .fold(T::infinity(), |m, &x| m.min(x));
    let tol = opts.tol * lambda1;
    if !(min_quotient >= lambda1 - tol) {
        return Err(Error::ThresholdViolated { quotient: min_quotient.to_f64_lossy(), lambda1: lambda1.to_f64_lossy() });
    }
    Ok(NonexistenceCertificate {
        lambda,
        lambda1_ref: lambda1,
        margin: (lambda1 - lambda).max(T::zero()),
        min_quotient,
        probe_count: probes.len() + threshold.restart_values.len() + 1,
        boundary_case,
    })
}

/// `J_lambda` restricted to a retraction: the cone alone (coercive case) or
/// the cone followed by the Nehari scaling.
struct EnergyProblem<'a, T> {
    spec: &'a ProblemSpec<T>,
    lambda: T,
    nehari: bool,
}

impl<T: Real> DescentProblem<T> for EnergyProblem<'_, T> {
    fn objective(&self, u: &[T]) -> T {
        values_raw(self.spec, self.lambda, u).j_lambda
    }

    fn gradient(&self, u: &[T]) -> Vec<T> {
        weak_parts(self.spec, u).residual(self.lambda)
    }

    fn retract(&self, u: &[T]) -> Option<Vec<T>> {
        let v = project_raw(self.spec, u).ok()?;
        let (lo, hi) = min_max(&v);
        if !(hi > lo) {
            return None;
        }
        if self.nehari {
            let t = fibering_scale(self.spec, self.lambda, &v).ok()?;
            Some(v.into_iter().map(|x| x * t).collect())
        } else {
            Some(v)
        }
    }

    fn residual(&self, u: &[T]) -> T {
        weak_parts(self.spec, u).relative_residual(self.lambda)
    }
}

struct EnergyRun<T> {
    u: Vec<T>,
    j: T,
    residual: T,
    iterations: usize,
}

/// Seeds shared by both cases: the threshold minimizer, the bump pair and
/// smoothed random fields, each placed on its fibering minimum.
fn energy_seeds<T: Real>(
    spec: &ProblemSpec<T>,
    ops: &Operators<T>,
    lambda: T,
    threshold: &ThresholdResult<T>,
    opts: &SolverOptions<T>,
) -> Vec<Vec<T>> {
    let mut raw: Vec<Result<Vec<T>>> = vec![
        Ok(threshold.minimizer.values().to_vec()),
        bump_pair_seed(spec).map(DiscreteField::into_values),
    ];
    for k in 2..opts.restart_count() {
        raw.push(random_cone_field(spec, ops, &mut rng(opts.seed, 700 + k as u64), true));
    }
    raw.into_iter()
        .filter_map(|s| s.ok())
        .filter_map(|s| {
            let v = project_raw(spec, &s).ok()?;
            let t = fibering_scale(spec, lambda, &v).ok()?;
            Some(v.into_iter().map(|x| x * t).collect())
        })
        .collect()
}

fn run_energy<T: Real>(
    problem: &EnergyProblem<'_, T>,
    ops: &Operators<T>,
    seed: Vec<T>,
    opts: &SolverOptions<T>,
) -> Option<EnergyRun<T>> {
    let spec = problem.spec;
    let mut u = problem.retract(&seed)?;
    let mut iterations = 0;
    let mut residual = problem.residual(&u);
    for handover in [T::c(1e-4), T::c(1e-7), T::zero()] {
        let out = descend(problem, ops, u.clone(), opts, handover, opts.max_iters.saturating_sub(iterations));
        iterations += out.iterations;
        u = out.u;
        residual = problem.residual(&u);
        if let Some((pu, pres, used)) = polish_energy(spec, problem.lambda, &u, opts.newton_iters) {
            iterations += used;
            if pres < residual && is_nonconstant(&pu) {
                u = pu;
                residual = pres;
            }
        }
        if residual <= opts.tol * T::c(1e-2) || iterations >= opts.max_iters {
            break;
        }
    }
    let j = values_raw(spec, problem.lambda, &u).j_lambda;
    Some(EnergyRun { u, j, residual, iterations })
}

fn pick_best<T: Real>(runs: &[Option<EnergyRun<T>>], accept: impl Fn(&EnergyRun<T>) -> bool) -> Option<&EnergyRun<T>> {
    let mut best: Option<&EnergyRun<T>> = None;
    for run in runs.iter().flatten() {
        if accept(run) && best.is_none_or(|b| run.j < b.j) {
            best = Some(run);
        }
    }
    best
}

fn eigenpair<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    run: &EnergyRun<T>,
    case_tag: CaseTag,
    kkt: KktReport<T>,
) -> EigenPair<T> {
    let values = values_raw(spec, lambda, &run.u);
    let nehari = case_tag == CaseTag::Nehari;
    EigenPair {
        lambda,
        field: spec.field_unchecked(run.u.clone()),
        weak_residual_norm: run.residual,
        cone_residual: scaled_g(spec, &run.u),
        nehari_residual: nehari.then(|| values.t1 + values.t2 - lambda * values.t3),
        values,
        m_lambda: nehari.then_some(values.j_lambda),
        case_tag,
        iterations: run.iterations,
        kkt: Some(kkt),
    }
}

fn accepted<T: Real>(spec: &ProblemSpec<T>, lambda: T, run: &EnergyRun<T>, opts: &SolverOptions<T>) -> bool {
    run.residual <= opts.tol && is_nonconstant(&run.u) && scaled_g(spec, &run.u) <= opts.constraint_tol.max(opts.tol)
        && {
            let v = values_raw(spec, lambda, &run.u);
            v.t3 > T::zero()
        }
}

/// Ground state on the Nehari manifold for `p < q` and `lambda > lambda1`.
pub fn solve_nehari<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    threshold: &ThresholdResult<T>,
    opts: &SolverOptions<T>,
) -> Result<EigenPair<T>> {
    if !(spec.p < spec.q) {
        return Err(Error::Precondition(format!("Nehari case needs p < q (p = {}, q = {})", spec.p, spec.q)));
    }
    if !(lambda > T::zero()) {
        return Err(Error::Precondition(format!("Nehari case needs lambda > 0, got {lambda}")));
    }
    let ops = Operators::new(spec)?;
    let seeds = energy_seeds(spec, &ops, lambda, threshold, opts);
    if seeds.is_empty() {
        return Err(Error::NoScalingWitness { lambda: lambda.to_f64_lossy() });
    }
    let problem = EnergyProblem { spec, lambda, nehari: true };
    let runs: Vec<Option<EnergyRun<T>>> = seeds.into_par_iter().map(|s| run_energy(&problem, &ops, s, opts)).collect();
    let best = pick_best(&runs, |r| accepted(spec, lambda, r, opts) && r.j > T::zero()).ok_or_else(|| nonconvergence(&runs))?;
    let kkt = nehari_kkt(spec, lambda, &best.u);
    Ok(eigenpair(spec, lambda, best, CaseTag::Nehari, kkt))
}

/// Global minimizer of `J_lambda` over the cone for `2 < q < p`.
pub fn solve_coercive<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    threshold: &ThresholdResult<T>,
    opts: &SolverOptions<T>,
) -> Result<EigenPair<T>> {
    if lambda == T::zero() {
        return Err(Error::UseZeroEigenpair);
    }
    if !(spec.q > T::c(2.0) && spec.q < spec.p) {
        return Err(Error::Precondition(format!("coercive case needs 2 < q < p (p = {}, q = {})", spec.p, spec.q)));
    }
    if !(lambda > T::zero()) {
        return Err(Error::Precondition(format!("coercive case needs lambda > 0, got {lambda}")));
    }
    let ops = Operators::new(spec)?;
    let seeds = energy_seeds(spec, &ops, lambda, threshold, opts);
    if seeds.is_empty() {
        return Err(Error::SuspectBelowThreshold { lambda: lambda.to_f64_lossy() });
    }
    let problem = EnergyProblem { spec, lambda, nehari: false };
    let runs: Vec<Option<EnergyRun<T>>> = seeds.into_par_iter().map(|s| run_energy(&problem, &ops, s, opts)).collect();
    if runs.iter().flatten().all(|r| r.j >= T::zero()) {
        return Err(Error::SuspectBelowThreshold { lambda: lambda.to_f64_lossy() });
    }
    let best = pick_best(&runs, |r| accepted(spec, lambda, r, opts) && r.j < T::zero()).ok_or_else(|| nonconvergence(&runs))?;
    let kkt = coercive_kkt(spec, lambda, &best.u);
    Ok(eigenpair(spec, lambda, best, CaseTag::Coercive, kkt))
}

fn nonconvergence<T: Real>(runs: &[Option<EnergyRun<T>>]) -> Error {
    let residual = runs.iter().flatten().fold(f64::INFINITY, |m, r| m.min(r.residual.to_f64_lossy()));
    let iterations = runs.iter().flatten().map(|r| r.iterations).sum();
    Error::NonConvergence { iterations, residual }
}

/// Multipliers of `J'_lambda + mu1 g1' + mu2 g2' = 0`, where `g1` is the
/// Nehari functional and `g2` the cone constraint. Both vanish at a genuine
/// eigenfunction.
fn nehari_kkt<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &[T]) -> KktReport<T> {
    let parts = weak_parts(spec, u);
    let (p, q) = (spec.p, spec.q);
    let base = parts.residual(lambda);
    let g1: Vec<T> = (0..u.len())
        .map(|i| p * parts.a_p[i] + q * parts.a_q[i] - q * lambda * parts.mass[i])
        .collect();
    let g2 = cone_gradient(spec, u);
    let mu = least_squares(&base, &[&g1, &g2]);
    let r: Vec<T> = (0..u.len()).map(|i| base[i] + mu[0] * g1[i] + mu[1] * g2[i]).collect();
    KktReport {
        lambda_star: T::one(),
        stationarity_residual: sup(&r) / parts.scale(lambda),
        multipliers: mu,
        multiplier_scaling: "lambda_star = 1; multipliers of (nehari, g)".into(),
    }
}

/// Single multiplier of the cone constraint, from testing with `v = 1`.
fn coercive_kkt<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &[T]) -> KktReport<T> {
    let parts = weak_parts(spec, u);
    let base = parts.residual(lambda);
    let g = cone_gradient(spec, u);
    let sg: T = g.iter().copied().sum();
    let mu = -base.iter().copied().sum::<T>() / sg;
    let r: Vec<T> = (0..u.len()).map(|i| base[i] + mu * g[i]).collect();
    KktReport {
        lambda_star: T::one(),
        stationarity_residual: sup(&r) / parts.scale(lambda),
        multipliers: vec![mu],
        multiplier_scaling: "lambda_star = 1; multiplier of g from v = 1".into(),
    }
}
