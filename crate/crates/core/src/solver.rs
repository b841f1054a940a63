//! Shared numerical machinery for the threshold and spectrum solvers:
//! options, the H1 preconditioner, seeded random fields, the preconditioned
//! descent loop with retraction, and Newton polishing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::{
    add_gradient_hessian, add_mass_hessian, element_gradients, energy_hessian, mass_terms, project_raw, sup,
    weak_parts, WeakParts,
};
use crate::linalg::{BandLu, BandMatrix};
use crate::mesh::{min_max, Mesh};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// Tunable parameters shared by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T> {
    /// Relative weak-residual tolerance for accepting eigenpairs.
    pub tol: T,
    /// Tolerance on the scaled cone residual and the mass constraint.
    pub constraint_tol: T,
    /// Descent iterations per restart.
    pub max_iters: usize,
    /// Newton iterations per polishing round.
    pub newton_iters: usize,
    /// Number of restart seeds (at least 3 are always used).
    pub restarts: usize,
    pub seed: u64,
    /// Random cone fields used by nonexistence certificates.
    pub probes: usize,
    /// Relative distance to the threshold treated as the threshold itself.
    pub boundary_tol: T,
    /// Relative stagnation threshold of the descent objective.
    pub stagnation_tol: T,
    pub stagnation_window: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::c(1e-8),
            constraint_tol: T::c(1e-10),
            max_iters: 4000,
            newton_iters: 60,
            restarts: 3,
            seed: 0,
            probes: 32,
            boundary_tol: T::c(1e-9),
            stagnation_tol: T::c(1e-10),
            stagnation_window: 10,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub(crate) fn restart_count(&self) -> usize {
        self.restarts.max(3)
    }
}

/// SplitMix64 finalizer; derives independent stream seeds from a master seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

pub(crate) fn random_nodal<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n).map(|_| T::c(rng.random_range(-1.0..1.0))).collect()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

pub(crate) fn axpy<T: Real>(u: &[T], alpha: T, d: &[T]) -> Vec<T> {
    u.iter().zip(d).map(|(x, y)| *x + alpha * *y).collect()
}

fn add_stiffness<T: Real>(mesh: &Mesh<T>, coef: T, mat: &mut BandMatrix<T>) {
    let dim = mesh.dimension();
    for el in mesh.elements() {
        for a in 0..=dim {
            for b in 0..=dim {
                let ga = el.basis_gradients[a];
                let gb = el.basis_gradients[b];
                mat.add(el.nodes[a], el.nodes[b], coef * el.measure * (ga[0] * gb[0] + ga[1] * gb[1]));
            }
        }
    }
}

fn add_volume_mass<T: Real>(mesh: &Mesh<T>, coef: T, mat: &mut BandMatrix<T>) {
    let rule = mesh.volume_rule();
    for (e, el) in mesh.elements().iter().enumerate() {
        let verts = mesh.element_nodes(e);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            for (k, &vk) in verts.iter().enumerate() {
                for (l, &vl) in verts.iter().enumerate() {
                    mat.add(vk, vl, coef * w * el.measure * bary[k] * bary[l]);
                }
            }
        }
    }
}

/// Linear operators of the problem: the factored H1 preconditioner
/// `K + M`, and the weighted mass matrix `M_ab` used by the linear seeds.
pub(crate) struct Operators<T> {
    pub precond: BandLu<T>,
    pub plain_mass: BandMatrix<T>,
    pub weighted_mass: BandMatrix<T>,
    pub stiffness: BandMatrix<T>,
}

impl<T: Real> Operators<T> {
    pub fn new(spec: &ProblemSpec<T>) -> Result<Self> {
        let mesh = &spec.mesh;
        let n = mesh.node_count();
        let w = mesh.bandwidth();
        let mut stiffness = BandMatrix::new(n, w, 0);
        add_stiffness(mesh, T::one(), &mut stiffness);
        let mut plain_mass = BandMatrix::new(n, w, 0);
        add_volume_mass(mesh, T::one(), &mut plain_mass);
        // Scale the mass part so both terms of K + cM carry the same units.
        let size = mesh.measure().powf(T::one() / T::from_count(mesh.dimension()));
        let c = T::one() / (size * size);
        let mut p = BandMatrix::new(n, w, 0);
        add_stiffness(mesh, T::one(), &mut p);
        add_volume_mass(mesh, c, &mut p);
        let linear = spec.with_exponents(spec.p, T::c(2.0));
        let mut weighted_mass = BandMatrix::new(n, w, 0);
        add_mass_hessian(&linear, &vec![T::one(); n], T::one(), &mut weighted_mass);
        Ok(Self { precond: p.factor()?, plain_mass, weighted_mass, stiffness })
    }

    pub fn precondition(&self, g: &[T]) -> Vec<T> {
        self.precond.solve(g)
    }

    /// Smooths a rough field by two applications of `(K + cM)^-1 M`.
    pub fn smooth(&self, u: &[T]) -> Vec<T> {
        let mut v = u.to_vec();
        for _ in 0..2 {
            v = self.precond.solve(&self.plain_mass.apply(&v));
        }
        v
    }
}

/// Random sign-balanced field: smoothed noise shifted into the cone and
/// scaled to unit sup-norm.
pub(crate) fn random_cone_field<T: Real>(
    spec: &ProblemSpec<T>,
    ops: &Operators<T>,
    rng: &mut ChaCha8Rng,
    smooth: bool,
) -> Result<Vec<T>> {
    let mut v = random_nodal(spec.node_count(), rng);
    if smooth {
        v = ops.smooth(&v);
    }
    let v = project_raw(spec, &v)?;
    let s = sup(&v);
    if s == T::zero() {
        return Err(Error::SeedUnavailable("random field collapsed onto a constant".into()));
    }
    Ok(v.into_iter().map(|x| x / s).collect())
}

/// Lowest nonconstant mode of the linear problem `K u = mu M_ab u`, found by
/// inverse iteration with the constants deflated, then shifted into the cone.
pub(crate) fn linear_mode_seed<T: Real>(spec: &ProblemSpec<T>, ops: &Operators<T>) -> Result<Vec<T>> {
    let n = spec.node_count();
    let mesh = &spec.mesh;
    let mut op = BandMatrix::new(n, mesh.bandwidth(), 0);
    let ones = vec![T::one(); n];
    let m1 = ops.weighted_mass.apply(&ones);
    let total = dot(&m1, &ones);
    if !(total > T::zero()) {
        return Err(Error::SeedUnavailable("weighted mass vanishes".into()));
    }
    // K + M_ab is definite once the weights carry positive mass.
    for i in 0..n {
        for j in i.saturating_sub(mesh.bandwidth())..=(i + mesh.bandwidth()).min(n - 1) {
            let v = ops.stiffness.get(i, j) + ops.weighted_mass.get(i, j);
            if v != T::zero() {
                op.add(i, j, v);
            }
        }
    }
    let lu = op.factor()?;
    let deflate = |v: &mut Vec<T>| {
        let c = dot(&m1, v) / total;
        for x in v.iter_mut() {
            *x = *x - c;
        }
    };
    // Deterministic start: the first coordinate, plus a weak gradient in y.
    let mut v: Vec<T> = mesh.nodes().iter().map(|x| x[0] + T::c(0.1) * x[1]).collect();
    deflate(&mut v);
    for _ in 0..40 {
        let mut w = lu.solve(&ops.weighted_mass.apply(&v));
        deflate(&mut w);
        let s = sup(&w);
        if !(s > T::zero()) {
            return Err(Error::SeedUnavailable("linear mode vanished".into()));
        }
        v = w.into_iter().map(|x| x / s).collect();
    }
    project_raw(spec, &v)
}

/// Problem-specific pieces of a descent run.
pub(crate) trait DescentProblem<T: Real> {
    /// Objective at a feasible point.
    fn objective(&self, u: &[T]) -> T;
    /// Euclidean gradient with respect to the nodal values.
    fn gradient(&self, u: &[T]) -> Vec<T>;
    /// Maps an arbitrary trial point back onto the feasible set.
    fn retract(&self, u: &[T]) -> Option<Vec<T>>;
    /// Relative stationarity measure used to hand over to Newton.
    fn residual(&self, u: &[T]) -> T;
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome<T> {
    pub u: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub history: Vec<T>,
}

/// Preconditioned descent with Armijo backtracking and step doubling. Stops
/// on stagnation of the objective, on reaching `handover` in the residual, or
/// after `max_iters` iterations.
pub(crate) fn descend<T: Real, P: DescentProblem<T>>(
    problem: &P,
    ops: &Operators<T>,
    u0: Vec<T>,
    opts: &SolverOptions<T>,
    handover: T,
    max_iters: usize,
) -> DescentOutcome<T> {
    let armijo = T::c(1e-4);
    let mut u = u0;
    let mut f = problem.objective(&u);
    let mut history = vec![f];
    let mut alpha = T::zero();
    let mut iterations = 0;
    while iterations < max_iters {
        if problem.residual(&u) <= handover {
            break;
        }
        let g = problem.gradient(&u);
        let d: Vec<T> = ops.precondition(&g).into_iter().map(|x| -x).collect();
        let slope = dot(&g, &d);
        let dmax = sup(&d);
        if !(slope < T::zero()) || dmax == T::zero() {
            break;
        }
        if alpha == T::zero() {
            alpha = T::c(0.05) * sup(&u).max(T::min_positive_value()) / dmax;
        }
        let mut accepted = None;
        for _ in 0..60 {
            if let Some(cand) = problem.retract(&axpy(&u, alpha, &d)) {
                let fc = problem.objective(&cand);
                if fc.is_finite() && fc <= f + armijo * alpha * slope {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            alpha = alpha / T::c(2.0);
        }
        let Some((cand, fc)) = accepted else { break };
        u = cand;
        f = fc;
        history.push(f);
        iterations += 1;
        alpha = alpha * T::c(2.0);
        let k = history.len();
        let window = opts.stagnation_window;
        if k > window {
            let old = history[k - 1 - window];
            if old - f <= opts.stagnation_tol * f.abs() {
                break;
            }
        }
    }
    DescentOutcome { u, value: f, iterations, history }
}

/// Relative residual of the homogeneous q-problem `A_q u = Lambda M u`.
pub(crate) fn q_residual<T: Real>(parts: &WeakParts<T>, lambda: T) -> T {
    let r: Vec<T> = parts.a_q.iter().zip(&parts.mass).map(|(a, m)| *a - lambda * *m).collect();
    let num = sup(&r);
    if num == T::zero() {
        return T::zero();
    }
    num / (sup(&parts.a_q) + lambda.abs() * sup(&parts.mass))
}

pub(crate) fn q_parts<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> (Vec<T>, Vec<T>) {
    let grads = element_gradients(&spec.mesh, u);
    let mut a_q = vec![T::zero(); u.len()];
    crate::functionals::add_gradient_action(&spec.mesh, &grads, spec.q, T::one(), &mut a_q);
    let mut mass = vec![T::zero(); u.len()];
    crate::functionals::add_mass_action(spec, u, T::one(), &mut mass);
    (a_q, mass)
}

pub(crate) fn q_residual_of<T: Real>(spec: &ProblemSpec<T>, u: &[T], lambda: T) -> T {
    let (a_q, mass) = q_parts(spec, u);
    q_residual(&WeakParts { a_p: Vec::new(), a_q, mass }, lambda)
}

/// Bordered Newton iteration for `A_q(u) = Lambda M(u)`, `T3(u) = 1`.
/// Returns the polished pair with its residual, or `None` if no step
/// improved the residual.
pub(crate) fn polish_threshold<T: Real>(
    spec: &ProblemSpec<T>,
    u0: &[T],
    lambda0: T,
    iters: usize,
) -> Option<(Vec<T>, T, T, usize)> {
    let n = u0.len();
    let mesh = &spec.mesh;
    let q = spec.q;
    let merit = |u: &[T], lam: T| -> (T, Vec<T>, Vec<T>, T) {
        let (a_q, mass) = q_parts(spec, u);
        let t3 = mass_terms(spec, u).t3;
        let r = q_residual(&WeakParts { a_p: Vec::new(), a_q: a_q.clone(), mass: mass.clone() }, lam);
        (r.max((t3 - T::one()).abs()), a_q, mass, t3)
    };
    let (mut res, mut a_q, mut mass, mut t3) = merit(u0, lambda0);
    let start = res;
    let mut u = u0.to_vec();
    let mut lam = lambda0;
    let mut used = 0;
    for _ in 0..iters {
        if res <= T::c(1e-14) {
            break;
        }
        let grads = element_gradients(mesh, &u);
        let mut jac = BandMatrix::new(n, mesh.bandwidth(), 1);
        add_gradient_hessian(mesh, &grads, q, T::one(), &mut jac);
        add_mass_hessian(spec, &u, -lam, &mut jac);
        let neg_mass: Vec<T> = mass.iter().map(|x| -*x).collect();
        jac.set_border_column(0, &neg_mass);
        jac.set_border_row(0, &mass);
        let Ok(lu) = jac.factor() else { break };
        let mut rhs: Vec<T> = a_q.iter().zip(&mass).map(|(a, m)| -(*a - lam * *m)).collect();
        rhs.push(-(t3 - T::one()) / q);
        let step = lu.solve(&rhs);
        if step.iter().any(|x| !x.is_finite()) {
            break;
        }
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let cand = axpy(&u, t, &step[..n]);
            let cl = lam + t * step[n];
            let (cr, ca, cm, ct) = merit(&cand, cl);
            if cr < res {
                u = cand;
                lam = cl;
                res = cr;
                a_q = ca;
                mass = cm;
                t3 = ct;
                improved = true;
                break;
            }
            t = t / T::c(2.0);
        }
        used += 1;
        if !improved {
            break;
        }
    }
    if res < start {
        Some((u, lam, res, used))
    } else {
        None
    }
}

/// Rayleigh quotient iteration for the linear case `q = 2`, where the
/// threshold problem is the generalized eigenproblem `K u = Lambda M_ab u`.
pub(crate) fn rayleigh_iteration<T: Real>(
    spec: &ProblemSpec<T>,
    ops: &Operators<T>,
    u0: &[T],
    lambda0: T,
    iters: usize,
) -> Option<(Vec<T>, T, T, usize)> {
    let n = u0.len();
    let bw = spec.mesh.bandwidth();
    let mut u = u0.to_vec();
    let mut lam = lambda0;
    let mut res = q_residual_of(spec, &u, lam);
    let start = res;
    let mut used = 0;
    for _ in 0..iters.min(12) {
        if res <= T::c(1e-14) {
            break;
        }
        let mut sigma = lam;
        let mut solved = None;
        for _ in 0..4 {
            let mut op = BandMatrix::new(n, bw, 0);
            for i in 0..n {
                for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                    op.add(i, j, ops.stiffness.get(i, j) - sigma * ops.weighted_mass.get(i, j));
                }
            }
            if let Ok(lu) = op.factor() {
                solved = Some(lu.solve(&ops.weighted_mass.apply(&u)));
                break;
            }
            sigma = sigma * (T::one() + T::c(1e-8).max(T::c(16.0) * T::epsilon()));
        }
        let Some(w) = solved else { break };
        let Ok(w) = project_raw(spec, &w) else { break };
        let t3 = mass_terms(spec, &w).t3;
        if !(t3 > T::zero()) || w.iter().any(|x| !x.is_finite()) {
            break;
        }
        let scale = t3.powf(-T::one() / spec.q);
        let w: Vec<T> = w.into_iter().map(|x| x * scale).collect();
        let (a_q, _) = q_parts(spec, &w);
        let cand_lam = dot(&a_q, &w);
        let cand_res = q_residual_of(spec, &w, cand_lam);
        used += 1;
        if cand_res < res {
            u = w;
            lam = cand_lam;
            res = cand_res;
        } else {
            break;
        }
    }
    if res < start {
        Some((u, lam, res, used))
    } else {
        None
    }
}

/// Damped Newton iteration on `J'_lambda(u) = 0`.
pub(crate) fn polish_energy<T: Real>(
    spec: &ProblemSpec<T>,
    lambda: T,
    u0: &[T],
    iters: usize,
) -> Option<(Vec<T>, T, usize)> {
    let mut u = u0.to_vec();
    let mut parts = weak_parts(spec, &u);
    let mut res = parts.relative_residual(lambda);
    let start = res;
    let mut used = 0;
    for _ in 0..iters {
        if res <= T::c(1e-14) {
            break;
        }
        let h = energy_hessian(spec, lambda, &u);
        let Ok(lu) = h.factor() else { break };
        let rhs: Vec<T> = parts.residual(lambda).into_iter().map(|x| -x).collect();
        let step = lu.solve(&rhs);
        if step.iter().any(|x| !x.is_finite()) {
            break;
        }
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let cand = axpy(&u, t, &step);
            let (lo, hi) = min_max(&cand);
            if hi > lo {
                let cp = weak_parts(spec, &cand);
                let cr = cp.relative_residual(lambda);
                if cr < res {
                    u = cand;
                    parts = cp;
                    res = cr;
                    improved = true;
                    break;
                }
            }
            t = t / T::c(2.0);
        }
        used += 1;
        if !improved {
            break;
        }
    }
    if res < start {
        Some((u, res, used))
    } else {
        None
    }
}

/// Least-squares coefficients `c` minimizing `|base + sum_k c_k cols_k|_2`.
pub(crate) fn least_squares<T: Real>(base: &[T], cols: &[&[T]]) -> Vec<T> {
    let k = cols.len();
    let mut gram = vec![T::zero(); k * k];
    let mut rhs = vec![T::zero(); k];
    for a in 0..k {
        for b in 0..k {
            gram[a * k + b] = dot(cols[a], cols[b]);
        }
        rhs[a] = -dot(cols[a], base);
    }
    // Small dense solve with partial pivoting; singular directions get 0.
    let mut order: Vec<usize> = (0..k).collect();
    let mut x = vec![T::zero(); k];
    let tiny = gram.iter().fold(T::zero(), |m, v| m.max(v.abs())) * T::c(1e-14);
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| gram[i * k + c].abs().partial_cmp(&gram[j * k + c].abs()).unwrap()).unwrap();
        if !(gram[p * k + c].abs() > tiny) {
            continue;
        }
        if p != c {
            for j in 0..k {
                gram.swap(c * k + j, p * k + j);
            }
            rhs.swap(c, p);
            order.swap(c, p);
        }
        for i in c + 1..k {
            let l = gram[i * k + c] / gram[c * k + c];
            for j in c..k {
                gram[i * k + j] = gram[i * k + j] - l * gram[c * k + j];
            }
            rhs[i] = rhs[i] - l * rhs[c];
        }
    }
    for c in (0..k).rev() {
        if !(gram[c * k + c].abs() > tiny) {
            continue;
        }
        let mut v = rhs[c];
        for j in c + 1..k {
            v = v - gram[c * k + j] * x[j];
        }
        x[c] = v / gram[c * k + c];
    }
    x
}
