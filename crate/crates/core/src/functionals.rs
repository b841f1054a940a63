//! Energies, constraints, quotients and first variations of the (p,q)
//! problem, plus the retractions that enforce the constraints.
//!
//! Notation used throughout:
//!
//! * `T1 = int |grad u|^p`, `T2 = int |grad u|^q`
//! * `T3 = int a |u|^q dx + int b |u|^q dsigma` (weighted q-mass)
//! * `g  = int a |u|^(q-2) u dx + int b |u|^(q-2) u dsigma` (cone residual)
//! * `J_lambda = T1/p + T2/q - lambda T3/q`
//!
//! The discrete weak residual is the exact gradient of the discrete
//! `J_lambda` with respect to the nodal coefficients, so a field is a discrete
//! eigenfunction iff this vector vanishes.

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{gradient_power_raw, min_max, DiscreteField, Mesh};
use crate::problem::ProblemSpec;
use crate::scalar::{abs_pow, signed_pow, Real};

/// Relative size of the gradient regularization used for exponents below 2.
pub const GRADIENT_REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValues<T> {
    pub t1: T,
    pub t2: T,
    pub t3: T,
    pub g: T,
    pub j_lambda: T,
    pub ab_norm: T,
}

/// Weighted integrals of powers of `u` in a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MassTerms<T> {
    /// `int a|u|^q + int b|u|^q`
    pub t3: T,
    /// `int a|u|^(q-2)u + int b|u|^(q-2)u`
    pub g: T,
    /// `int a|u|^(q-1) + int b|u|^(q-1)`, the natural scale of `g`.
    pub g_scale: T,
    /// `int a|u|^(q-2) + int b|u|^(q-2)`
    pub weighted_mass: T,
}

pub(crate) fn mass_terms_shifted<T: Real>(spec: &ProblemSpec<T>, u: &[T], shift: T) -> MassTerms<T> {
    let q = spec.q;
    let mesh = &spec.mesh;
    let mut out = MassTerms { t3: T::zero(), g: T::zero(), g_scale: T::zero(), weighted_mass: T::zero() };
    let mut visit = |w: T, weight: T, uq: T| {
        if weight == T::zero() {
            return;
        }
        let x = uq - shift;
        let ww = w * weight;
        let m2 = abs_pow(x, q - T::c(2.0));
        let ax = x.abs();
        out.weighted_mass = out.weighted_mass + ww * m2;
        out.g = out.g + ww * m2 * x;
        out.g_scale = out.g_scale + ww * m2 * ax;
        out.t3 = out.t3 + ww * m2 * ax * ax;
    };
    let (a, b) = (spec.a(), spec.b());
    let rule = mesh.volume_rule();
    for (e, el) in mesh.elements().iter().enumerate() {
        let verts = mesh.element_nodes(e);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let aq = Mesh::interpolate_at(verts, bary, a);
            let uq = Mesh::interpolate_at(verts, bary, u);
            visit(w * el.measure, aq, uq);
        }
    }
    let rule = mesh.boundary_rule();
    for (f, facet) in mesh.boundary_facets().iter().enumerate() {
        let verts = mesh.facet_nodes(f);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let bq = Mesh::interpolate_at(verts, bary, b);
            let uq = Mesh::interpolate_at(verts, bary, u);
            visit(w * facet.measure, bq, uq);
        }
    }
    out
}

pub(crate) fn mass_terms<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> MassTerms<T> {
    mass_terms_shifted(spec, u, T::zero())
}

pub(crate) fn t1_raw<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> T {
    gradient_power_raw(&spec.mesh, u, spec.p)
}

pub(crate) fn t2_raw<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> T {
    gradient_power_raw(&spec.mesh, u, spec.q)
}

pub(crate) fn values_raw<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &[T]) -> FunctionalValues<T> {
    let t1 = t1_raw(spec, u);
    let t2 = t2_raw(spec, u);
    let m = mass_terms(spec, u);
    FunctionalValues {
        t1,
        t2,
        t3: m.t3,
        g: m.g,
        j_lambda: t1 / spec.p + t2 / spec.q - lambda * m.t3 / spec.q,
        ab_norm: t1.powf(T::one() / spec.p) + m.t3.powf(T::one() / spec.q),
    }
}

/// All scalar functionals of `u` at spectral parameter `lambda`.
pub fn evaluate<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &DiscreteField<T>) -> Result<FunctionalValues<T>> {
    u.check_mesh(&spec.mesh)?;
    Ok(values_raw(spec, lambda, u.values()))
}

/// Cone residual `g(u)`; `u` lies in the cone iff this vanishes.
pub fn cone_residual<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    check_q(spec)?;
    Ok(mass_terms(spec, u.values()).g)
}

/// `|g(u)|` relative to `int (a+b)|u|^(q-1)`; zero for the zero field.
pub fn scaled_cone_residual<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    let m = mass_terms(spec, u.values());
    Ok(if m.g_scale > T::zero() { m.g.abs() / m.g_scale } else { m.g.abs() })
}

pub fn energy_j_lambda<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &DiscreteField<T>) -> Result<T> {
    Ok(evaluate(spec, lambda, u)?.j_lambda)
}

fn check_q<T: Real>(spec: &ProblemSpec<T>) -> Result<()> {
    if spec.q >= T::c(2.0) {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("q = {} < 2", spec.q)))
    }
}

/// Regularization scale for the density `|grad u|^(r-2) grad u` when `r < 2`.
pub(crate) fn regularization<T: Real>(mesh: &Mesh<T>, grads: &[[T; 2]], r: T) -> T {
    if r >= T::c(2.0) {
        return T::zero();
    }
    let gmax = grads.iter().fold(T::zero(), |m, g| m.max((g[0] * g[0] + g[1] * g[1]).sqrt()));
    let _ = mesh;
    T::c(GRADIENT_REGULARIZATION) * gmax
}

pub(crate) fn element_gradients<T: Real>(mesh: &Mesh<T>, u: &[T]) -> Vec<[T; 2]> {
    (0..mesh.elements().len()).map(|e| mesh.element_gradient(e, u)).collect()
}

/// `(|g|^2 + eps^2)^((r-2)/2)`, extended by zero at `g = 0` when `eps = 0`.
#[inline]
fn density_weight<T: Real>(s: T, eps: T, r: T) -> T {
    let s2 = s + eps * eps;
    if s2 == T::zero() {
        if r == T::c(2.0) {
            T::one()
        } else {
            T::zero()
        }
    } else if r == T::c(2.0) {
        T::one()
    } else {
        s2.powf((r - T::c(2.0)) / T::c(2.0))
    }
}

/// `out_i += coef * int |grad u|^(r-2) grad u . grad phi_i`.
pub(crate) fn add_gradient_action<T: Real>(mesh: &Mesh<T>, grads: &[[T; 2]], r: T, coef: T, out: &mut [T]) {
    let eps = regularization(mesh, grads, r);
    let dim = mesh.dimension();
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = grads[e];
        let s = g[0] * g[0] + g[1] * g[1];
        let wgt = density_weight(s, eps, r) * el.measure * coef;
        if wgt == T::zero() {
            continue;
        }
        for k in 0..=dim {
            let bg = el.basis_gradients[k];
            let node = el.nodes[k];
            out[node] = out[node] + wgt * (g[0] * bg[0] + g[1] * bg[1]);
        }
    }
}

/// Hessian of `coef * int |grad u|^r / r` (with the same regularization as
/// [`add_gradient_action`]) added into a band matrix.
pub(crate) fn add_gradient_hessian<T: Real>(
    mesh: &Mesh<T>,
    grads: &[[T; 2]],
    r: T,
    coef: T,
    mat: &mut BandMatrix<T>,
) {
    let eps = regularization(mesh, grads, r);
    let dim = mesh.dimension();
    let two = T::c(2.0);
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = grads[e];
        let s = g[0] * g[0] + g[1] * g[1];
        let s2 = s + eps * eps;
        let (w, dw) = if s2 == T::zero() {
            if r == two {
                (T::one(), T::zero())
            } else {
                (T::zero(), T::zero())
            }
        } else if r == two {
            (T::one(), T::zero())
        } else {
            let w = s2.powf((r - two) / two);
            (w, (r - two) * w / s2)
        };
        // D = w I + dw g g^T
        let d = [
            [w + dw * g[0] * g[0], dw * g[0] * g[1]],
            [dw * g[1] * g[0], w + dw * g[1] * g[1]],
        ];
        let scale = coef * el.measure;
        for a in 0..=dim {
            let ga = el.basis_gradients[a];
            let da = [d[0][0] * ga[0] + d[1][0] * ga[1], d[0][1] * ga[0] + d[1][1] * ga[1]];
            for b in 0..=dim {
                let gb = el.basis_gradients[b];
                mat.add(el.nodes[a], el.nodes[b], scale * (da[0] * gb[0] + da[1] * gb[1]));
            }
        }
    }
}

/// Visits every volume and boundary quadrature point with the interpolated
/// weight, field value, physical weight and the local basis values.
fn for_each_weighted_point<T: Real>(spec: &ProblemSpec<T>, u: &[T], mut visit: impl FnMut(&[usize], &[T; 3], T, T, T)) {
    let mesh = &spec.mesh;
    let (a, b) = (spec.a(), spec.b());
    let rule = mesh.volume_rule();
    for (e, el) in mesh.elements().iter().enumerate() {
        let verts = mesh.element_nodes(e);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let aq = Mesh::interpolate_at(verts, bary, a);
            if aq != T::zero() {
                visit(verts, bary, aq, Mesh::interpolate_at(verts, bary, u), w * el.measure);
            }
        }
    }
    let rule = mesh.boundary_rule();
    for (f, facet) in mesh.boundary_facets().iter().enumerate() {
        let verts = mesh.facet_nodes(f);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let bq = Mesh::interpolate_at(verts, bary, b);
            if bq != T::zero() {
                visit(verts, bary, bq, Mesh::interpolate_at(verts, bary, u), w * facet.measure);
            }
        }
    }
}

/// `out_i += coef * (int a|u|^(q-2)u phi_i + int b|u|^(q-2)u phi_i)`, the
/// gradient of `coef * T3 / q`.
pub(crate) fn add_mass_action<T: Real>(spec: &ProblemSpec<T>, u: &[T], coef: T, out: &mut [T]) {
    let q = spec.q;
    for_each_weighted_point(spec, u, |verts, bary, wq, uq, dx| {
        let f = coef * dx * wq * signed_pow(uq, q);
        for (k, &v) in verts.iter().enumerate() {
            out[v] = out[v] + f * bary[k];
        }
    });
}

/// Hessian of `coef * T3 / q`.
pub(crate) fn add_mass_hessian<T: Real>(spec: &ProblemSpec<T>, u: &[T], coef: T, mat: &mut BandMatrix<T>) {
    let q = spec.q;
    for_each_weighted_point(spec, u, |verts, bary, wq, uq, dx| {
        let f = coef * dx * wq * (q - T::one()) * abs_pow(uq, q - T::c(2.0));
        for (k, &vk) in verts.iter().enumerate() {
            for (l, &vl) in verts.iter().enumerate() {
                mat.add(vk, vl, f * bary[k] * bary[l]);
            }
        }
    });
}

/// Derivative of the cone constraint tested with each basis function,
/// `(q-1) (int a|u|^(q-2) phi_i + int b|u|^(q-2) phi_i)`.
pub(crate) fn cone_gradient<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> Vec<T> {
    let q = spec.q;
    let mut out = vec![T::zero(); u.len()];
    for_each_weighted_point(spec, u, |verts, bary, wq, uq, dx| {
        let f = dx * wq * (q - T::one()) * abs_pow(uq, q - T::c(2.0));
        for (k, &v) in verts.iter().enumerate() {
            out[v] = out[v] + f * bary[k];
        }
    });
    out
}

/// The three pieces of the weak form tested against every basis function.
#[derive(Debug, Clone)]
pub(crate) struct WeakParts<T> {
    /// `int |grad u|^(p-2) grad u . grad phi_i`
    pub a_p: Vec<T>,
    /// `int |grad u|^(q-2) grad u . grad phi_i`
    pub a_q: Vec<T>,
    /// `int a|u|^(q-2)u phi_i + int b|u|^(q-2)u phi_i`
    pub mass: Vec<T>,
}

pub(crate) fn weak_parts<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> WeakParts<T> {
    let n = u.len();
    let grads = element_gradients(&spec.mesh, u);
    let mut a_p = vec![T::zero(); n];
    let mut a_q = vec![T::zero(); n];
    let mut mass = vec![T::zero(); n];
    add_gradient_action(&spec.mesh, &grads, spec.p, T::one(), &mut a_p);
    add_gradient_action(&spec.mesh, &grads, spec.q, T::one(), &mut a_q);
    add_mass_action(spec, u, T::one(), &mut mass);
    WeakParts { a_p, a_q, mass }
}

pub(crate) fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

impl<T: Real> WeakParts<T> {
    pub fn residual(&self, lambda: T) -> Vec<T> {
        self.a_p
            .iter()
            .zip(&self.a_q)
            .zip(&self.mass)
            .map(|((p, q), m)| *p + *q - lambda * *m)
            .collect()
    }

    /// Scale against which residuals are measured:
    /// `|A_p u| + |A_q u| + lambda |M u|` in the sup norm.
    pub fn scale(&self, lambda: T) -> T {
        sup(&self.a_p) + sup(&self.a_q) + lambda.abs() * sup(&self.mass)
    }

    pub fn relative_residual(&self, lambda: T) -> T {
        let r = sup(&self.residual(lambda));
        if r == T::zero() {
            return T::zero();
        }
        let s = self.scale(lambda);
        if s > T::zero() {
            r / s
        } else {
            T::infinity()
        }
    }
}

pub(crate) fn weak_residual_raw<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &[T]) -> Vec<T> {
    weak_parts(spec, u).residual(lambda)
}

/// `<J'_lambda(u), phi_i>` for every nodal basis function `phi_i`.
pub fn weak_residual<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &DiscreteField<T>) -> Result<Vec<T>> {
    u.check_mesh(&spec.mesh)?;
    if spec.p < T::c(2.0) && u.is_zero() {
        return Err(Error::ZeroField);
    }
    let r = weak_residual_raw(spec, lambda, u.values());
    if r.iter().any(|x| x.is_nan()) {
        return Err(Error::NanResidual);
    }
    Ok(r)
}

/// Sup-norm of the weak residual relative to the sup-norms of its terms.
pub fn relative_weak_residual<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    Ok(weak_parts(spec, u.values()).relative_residual(lambda))
}

/// Hessian of the discrete `J_lambda`.
pub(crate) fn energy_hessian<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &[T]) -> BandMatrix<T> {
    let mesh = &spec.mesh;
    let grads = element_gradients(mesh, u);
    let mut h = BandMatrix::new(u.len(), mesh.bandwidth(), 0);
    add_gradient_hessian(mesh, &grads, spec.p, T::one(), &mut h);
    add_gradient_hessian(mesh, &grads, spec.q, T::one(), &mut h);
    add_mass_hessian(spec, u, -lambda, &mut h);
    h
}

fn quotient<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::infinity()
    }
}

/// `T2 / T3`, or `+inf` when the weighted mass vanishes.
pub fn rayleigh_q<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    Ok(rayleigh_q_raw(spec, u.values()))
}

pub(crate) fn rayleigh_q_raw<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> T {
    quotient(t2_raw(spec, u), mass_terms(spec, u).t3)
}

/// `(T2/q + T1/p) / (T3/q)`, or `+inf` when the weighted mass vanishes.
pub fn rayleigh_pq<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    let v = values_raw(spec, T::zero(), u.values());
    Ok(quotient(v.t2 / spec.q + v.t1 / spec.p, v.t3 / spec.q))
}

/// `||grad u||_p + T3^(1/q)`.
pub fn ab_norm<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<T> {
    Ok(evaluate(spec, T::zero(), u)?.ab_norm)
}

/// `T1 + T2 - lambda T3`; vanishes on the Nehari manifold.
pub fn nehari_residual<T: Real>(spec: &ProblemSpec<T>, lambda: T, u: &DiscreteField<T>) -> Result<T> {
    u.check_mesh(&spec.mesh)?;
    if u.is_zero() {
        return Err(Error::ZeroField);
    }
    let v = values_raw(spec, lambda, u.values());
    Ok(v.t1 + v.t2 - lambda * v.t3)
}

/// Scaling `t = (T1 / (lambda T3 - T2))^(1/(q-p))` along the ray through `v`.
/// Valid for either ordering of `p` and `q`; for `q < p` it gives the minimizer
/// of `J_lambda` along the ray.
pub(crate) fn fibering_scale<T: Real>(spec: &ProblemSpec<T>, lambda: T, v: &[T]) -> Result<T> {
    let t1 = t1_raw(spec, v);
    let t2 = t2_raw(spec, v);
    let t3 = mass_terms(spec, v).t3;
    fibering_scale_from(spec, lambda, t1, t2, t3)
}

pub(crate) fn fibering_scale_from<T: Real>(spec: &ProblemSpec<T>, lambda: T, t1: T, t2: T, t3: T) -> Result<T> {
    let den = lambda * t3 - t2;
    if !(den > T::zero()) {
        return Err(Error::ScaleDenominator { denominator: den.to_f64_lossy() });
    }
    if !(t1 > T::zero()) {
        return Err(Error::Precondition("field has vanishing p-energy".into()));
    }
    Ok((t1 / den).powf(T::one() / (spec.q - spec.p)))
}

/// Scales `v` onto the Nehari manifold; requires `p < q` and `R_q(v) < lambda`.
pub fn nehari_scale<T: Real>(spec: &ProblemSpec<T>, lambda: T, v: &DiscreteField<T>) -> Result<(T, DiscreteField<T>)> {
    v.check_mesh(&spec.mesh)?;
    if !(spec.p < spec.q) {
        return Err(Error::Precondition(format!("Nehari scaling needs p < q (p = {}, q = {})", spec.p, spec.q)));
    }
    if v.is_zero() {
        return Err(Error::ZeroField);
    }
    let t = fibering_scale(spec, lambda, v.values())?;
    Ok((t, v.scaled(t)))
}

/// Tolerance on `|g|` relative to its natural scale for the shift retraction.
const CONE_TOL: f64 = 1e-15;

/// Shift `s*` with `g(u - s*) = 0`. The map `s -> g(u - s)` is strictly
/// decreasing, so the root is unique; it is located by Newton iteration
/// safeguarded by bisection and finished with two Newton steps.
pub(crate) fn cone_shift<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> Result<T> {
    let m0 = mass_terms(spec, u);
    if m0.g_scale > T::zero() && m0.g.abs() <= T::c(CONE_TOL) * m0.g_scale {
        return Ok(T::zero());
    }
    let (umin, umax) = min_max(u);
    let (mut lo, mut hi) = (umin - T::one(), umax + T::one());
    let h_lo = mass_terms_shifted(spec, u, lo).g;
    let h_hi = mass_terms_shifted(spec, u, hi).g;
    if !(h_lo > T::zero() && h_hi < T::zero()) {
        return Err(Error::NotBracketed { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }
    let q1 = spec.q - T::one();
    let width0 = hi - lo;
    let mut s = (umin + umax) / T::c(2.0);
    for _ in 0..200 {
        let m = mass_terms_shifted(spec, u, s);
        if m.g.abs() <= T::c(CONE_TOL) * m.g_scale {
            break;
        }
        if m.g > T::zero() {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= T::c(1e-14) * width0 {
            break;
        }
        let slope = q1 * m.weighted_mass;
        let newton = if slope > T::zero() { s + m.g / slope } else { T::nan() };
        s = if newton > lo && newton < hi { newton } else { (lo + hi) / T::c(2.0) };
    }
    for _ in 0..2 {
        let m = mass_terms_shifted(spec, u, s);
        let slope = q1 * m.weighted_mass;
        if slope > T::zero() {
            let next = s + m.g / slope;
            if next.is_finite() {
                s = next;
            }
        }
    }
    Ok(s)
}

/// Constant-shift retraction onto the cone.
pub fn project_to_cone<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<DiscreteField<T>> {
    u.check_mesh(&spec.mesh)?;
    check_q(spec)?;
    let s = cone_shift(spec, u.values())?;
    Ok(if s == T::zero() { u.clone() } else { u.shifted(s) })
}

pub(crate) fn project_raw<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> Result<Vec<T>> {
    let s = cone_shift(spec, u)?;
    Ok(u.iter().map(|&x| x - s).collect())
}

/// Rescales `u` to unit weighted q-mass.
pub fn normalize_mass<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<DiscreteField<T>> {
    u.check_mesh(&spec.mesh)?;
    let t3 = mass_terms(spec, u.values()).t3;
    if !(t3 > T::zero()) {
        return Err(Error::ZeroMass);
    }
    Ok(u.scaled(t3.powf(-T::one() / spec.q)))
}

pub(crate) fn normalize_raw<T: Real>(spec: &ProblemSpec<T>, u: &[T]) -> Result<Vec<T>> {
    let t3 = mass_terms(spec, u).t3;
    if !(t3 > T::zero()) {
        return Err(Error::ZeroMass);
    }
    let t = t3.powf(-T::one() / spec.q);
    Ok(u.iter().map(|&x| x * t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use std::sync::Arc;

    fn spec(n: usize, p: f64, q: f64, a: f64, b: f64) -> ProblemSpec<f64> {
        let mesh = Arc::new(build_interval_mesh(n, 0.0, 1.0).unwrap());
        let nn = mesh.node_count();
        ProblemSpec::new(mesh, p, q, vec![a; nn], vec![b; nn]).unwrap()
    }

    fn field(s: &ProblemSpec<f64>, f: impl Fn(f64) -> f64) -> DiscreteField<f64> {
        DiscreteField::interpolate(&s.mesh, |x| f(x[0])).unwrap()
    }

    #[test]
    fn cone_residual_examples() {
        let s = spec(32, 1.5, 3.0, 1.0, 0.0);
        assert_eq!(cone_residual(&s, &DiscreteField::zeros(&s.mesh)).unwrap(), 0.0);
        assert!((cone_residual(&s, &DiscreteField::constant(&s.mesh, 1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(cone_residual(&s, &field(&s, |x| x - 0.5)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let s = spec(16, 1.5, 3.0, 1.0, 0.0);
        let c = 1.7;
        let j = energy_j_lambda(&s, 1.0, &DiscreteField::constant(&s.mesh, c)).unwrap();
        assert!((j + c * c * c / 3.0).abs() < 1e-13);
        assert_eq!(energy_j_lambda(&s, 1.0, &DiscreteField::zeros(&s.mesh)).unwrap(), 0.0);
        let j = energy_j_lambda(&s, 0.0, &field(&s, |x| x)).unwrap();
        assert!((j - 1.0).abs() < 1e-13);
    }

    #[test]
    fn weak_residual_vanishes_on_constants_at_zero() {
        for p in [1.5, 2.0, 4.0] {
            let s = spec(20, p, 3.0, 1.0, 1.0);
            let r = weak_residual(&s, 0.0, &DiscreteField::constant(&s.mesh, -3.0)).unwrap();
            assert!(r.iter().all(|x| x.abs() < 1e-15), "p = {p}");
        }
    }

    #[test]
    fn weak_residual_summed_is_minus_lambda_g() {
        let s = spec(32, 1.5, 3.0, 1.0, 0.5);
        let u = project_to_cone(&s, &field(&s, |x| (3.0 * x).sin() + x * x)).unwrap();
        let r = weak_residual(&s, 7.0, &u).unwrap();
        let total: f64 = r.iter().sum();
        let scale: f64 = r.iter().map(|x| x.abs()).sum();
        assert!(total.abs() < 1e-12 * scale, "{total}");
    }

    #[test]
    fn weak_residual_rejects_zero_field_for_small_p() {
        let s = spec(8, 1.5, 3.0, 1.0, 0.0);
        assert_eq!(weak_residual(&s, 1.0, &DiscreteField::zeros(&s.mesh)), Err(Error::ZeroField));
    }

    #[test]
    fn rayleigh_q_cosine() {
        let s = spec(512, 2.5, 2.0, 1.0, 0.0);
        let u = field(&s, |x| (std::f64::consts::PI * x).cos());
        let r = rayleigh_q(&s, &u).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((r - pi2).abs() / pi2 < 5e-3);
        let r7 = rayleigh_q(&s, &u.scaled(7.0)).unwrap();
        assert!((r7 - r).abs() <= 1e-12 * r);
    }

    #[test]
    fn rayleigh_q_infinite_when_mass_vanishes() {
        // a supported on the left half, field supported on the right half
        let mesh = Arc::new(build_interval_mesh(16, 0.0, 1.0).unwrap());
        let a: Vec<f64> = mesh.nodes().iter().map(|x| if x[0] <= 0.25 { 1.0 } else { 0.0 }).collect();
        let s = ProblemSpec::new(mesh.clone(), 1.5, 3.0, a, vec![0.0; 17]).unwrap();
        let u = DiscreteField::interpolate(&mesh, |x| if x[0] >= 0.5 && x[0] <= 0.75 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(rayleigh_q(&s, &u).unwrap(), f64::INFINITY);
        assert_eq!(rayleigh_pq(&s, &u).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rayleigh_pq_examples() {
        let s = spec(64, 1.5, 3.0, 1.0, 0.0);
        let u = project_to_cone(&s, &field(&s, |x| x + 0.3 * (5.0 * x).sin())).unwrap();
        let rq = rayleigh_q(&s, &u).unwrap();
        assert!(rayleigh_pq(&s, &u).unwrap() >= rq);
        let far = rayleigh_pq(&s, &u.scaled(1e3)).unwrap();
        assert!((far - rq).abs() / rq < 1e-3);
        assert_eq!(rayleigh_pq(&s, &DiscreteField::zeros(&s.mesh)), Err(Error::ZeroField));
    }

    #[test]
    fn ab_norm_examples() {
        let s = spec(16, 1.5, 3.0, 1.0, 0.0);
        assert_eq!(ab_norm(&s, &DiscreteField::zeros(&s.mesh)).unwrap(), 0.0);
        assert!((ab_norm(&s, &DiscreteField::constant(&s.mesh, 1.0)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nehari_scale_examples() {
        // T1 = 1, lambda T3 - T2 = 2, q - p = 2 gives 2^(-1/2)
        let s = spec(8, 1.0 + 1.0, 4.0, 1.0, 0.0);
        let t = fibering_scale_from(&s, 1.0, 1.0, 1.0, 3.0).unwrap();
        assert!((t - 0.5f64.sqrt()).abs() < 1e-15);
        let t = fibering_scale_from(&s, 2.0, 5.0, 1.0, 3.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(matches!(fibering_scale_from(&s, 1.0, 1.0, 3.0, 2.0), Err(Error::ScaleDenominator { .. })));
    }

    #[test]
    fn nehari_scale_lands_on_manifold() {
        let s = spec(64, 1.5, 3.0, 1.0, 0.0);
        let v = project_to_cone(&s, &field(&s, |x| (std::f64::consts::PI * x).cos())).unwrap();
        let lambda = 2.0 * rayleigh_q(&s, &v).unwrap();
        let (t, w) = nehari_scale(&s, lambda, &v).unwrap();
        assert!(t > 0.0);
        let vals = evaluate(&s, lambda, &w).unwrap();
        let res = nehari_residual(&s, lambda, &w).unwrap();
        assert!(res.abs() <= 1e-12 * (vals.t1 + vals.t2 + lambda * vals.t3));
        let low = 0.5 * rayleigh_q(&s, &v).unwrap();
        assert!(matches!(nehari_scale(&s, low, &v), Err(Error::ScaleDenominator { .. })));
    }

    #[test]
    fn nehari_residual_arithmetic() {
        let s = spec(16, 1.5, 3.0, 1.0, 0.0);
        let c = DiscreteField::constant(&s.mesh, 2.0);
        assert!(nehari_residual(&s, 1.0, &c).unwrap() < 0.0);
    }

    #[test]
    fn project_to_cone_examples() {
        let s = spec(32, 1.5, 3.0, 1.0, 0.0);
        let u = field(&s, |x| x - 0.5);
        let pu = project_to_cone(&s, &u).unwrap();
        assert!(pu.values().iter().zip(u.values()).all(|(a, b)| (a - b).abs() < 1e-12));
        let c = project_to_cone(&s, &DiscreteField::constant(&s.mesh, 2.5)).unwrap();
        assert!(c.sup_norm() < 1e-12);
        let lin = field(&s, |x| x);
        let p = project_to_cone(&s, &lin).unwrap();
        let m = mass_terms(&s, p.values());
        assert!(m.g.abs() <= 1e-12 * m.g_scale);
    }

    #[test]
    fn project_fails_without_weights() {
        let s = spec(8, 1.5, 3.0, 0.0, 0.0);
        let u = field(&s, |x| x);
        assert!(matches!(project_to_cone(&s, &u), Err(Error::NotBracketed { .. })));
    }

    #[test]
    fn normalize_mass_examples() {
        let s = spec(8, 1.5, 4.0, 1.0, 0.0);
        // constant 2 with a = 1 on unit interval: T3 = 16, t* = 1/2
        let u = DiscreteField::constant(&s.mesh, 2.0);
        let n = normalize_mass(&s, &u).unwrap();
        assert!((n.values()[0] - 1.0).abs() < 1e-14);
        let again = normalize_mass(&s, &n).unwrap();
        assert!((again.values()[3] - 1.0).abs() < 1e-14);
        assert_eq!(normalize_mass(&s, &DiscreteField::zeros(&s.mesh)), Err(Error::ZeroMass));
    }
}
