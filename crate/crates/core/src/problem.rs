//! Problem instances: exponents, weights, hypothesis checks, and nonzero
//! points of the cone built from two disjoint bumps.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{DiscreteField, Mesh};
use crate::scalar::{abs_pow, Real};

/// Labels of the standing hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hypothesis {
    /// `1 < p`, `2 < q`, `p != q`.
    Pq,
    /// Nonnegative weights with positive total mass.
    Ab,
    /// Admissible domain discretization.
    Omega,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::Pq => "H_pq",
            Hypothesis::Ab => "H_ab",
            Hypothesis::Omega => "H_Omega",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A (p,q) problem on a fixed mesh. Both weights are nodal P1 tables over
/// all mesh nodes; only the boundary trace of `weight_b` is ever used.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    pub p: T,
    pub q: T,
    pub weight_a: DiscreteField<T>,
    pub weight_b: DiscreteField<T>,
    pub mesh: Arc<Mesh<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    pub ok: bool,
    pub violated_hypotheses: Vec<Hypothesis>,
    pub mass_a: T,
    pub mass_b: T,
}

impl<T: Real> ProblemSpec<T> {
    /// Structural checks only (lengths, finiteness); hypotheses are reported
    /// by [`validate_problem`].
    pub fn new(mesh: Arc<Mesh<T>>, p: T, q: T, weight_a: Vec<T>, weight_b: Vec<T>) -> Result<Self> {
        let weight_a = DiscreteField::new(&mesh, weight_a)?;
        let weight_b = DiscreteField::new(&mesh, weight_b)?;
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidExponent(format!("p = {p}, q = {q}")));
        }
        Ok(Self { p, q, weight_a, weight_b, mesh })
    }

    /// Same weights and mesh, different exponents.
    pub fn with_exponents(&self, p: T, q: T) -> Self {
        Self { p, q, ..self.clone() }
    }

    /// Weights multiplied by `c`.
    pub fn with_scaled_weights(&self, c: T) -> Self {
        Self {
            weight_a: self.weight_a.scaled(c),
            weight_b: self.weight_b.scaled(c),
            ..self.clone()
        }
    }

    pub fn a(&self) -> &[T] {
        self.weight_a.values()
    }

    pub fn b(&self) -> &[T] {
        self.weight_b.values()
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn field(&self, values: Vec<T>) -> Result<DiscreteField<T>> {
        DiscreteField::new(&self.mesh, values)
    }

    pub(crate) fn field_unchecked(&self, values: Vec<T>) -> DiscreteField<T> {
        DiscreteField::from_raw(self.mesh.id(), values)
    }
}

fn masses<T: Real>(spec: &ProblemSpec<T>) -> (T, T) {
    let one = DiscreteField::constant(&spec.mesh, T::one());
    let mass_a = crate::mesh::volume_power_integral(&spec.mesh, &one, &spec.weight_a, T::one(), false)
        .unwrap_or_else(|_| T::nan());
    let mass_b = crate::mesh::boundary_power_integral(&spec.mesh, &one, &spec.weight_b, T::one(), false)
        .unwrap_or_else(|_| T::nan());
    (mass_a, mass_b)
}

fn weights_violation<T: Real>(spec: &ProblemSpec<T>, mass_a: T, mass_b: T) -> bool {
    let negative_a = spec.a().iter().any(|&w| w < T::zero());
    let negative_b = spec
        .mesh
        .boundary_nodes()
        .iter()
        .any(|&i| spec.b()[i] < T::zero());
    negative_a || negative_b || !(mass_a + mass_b > T::zero())
}

fn domain_violation<T: Real>(spec: &ProblemSpec<T>) -> bool {
    let m = &spec.mesh;
    !(m.measure() > T::zero()) || m.boundary_facets().is_empty() || m.elements().iter().any(|e| !(e.measure > T::zero()))
}

/// Checks every standing hypothesis and reports all violations at once.
pub fn validate_problem<T: Real>(spec: &ProblemSpec<T>) -> ValidationReport<T> {
    let (mass_a, mass_b) = masses(spec);
    let mut violated = Vec::new();
    if !(spec.p > T::one() && spec.q > T::c(2.0) && spec.p != spec.q) {
        violated.push(Hypothesis::Pq);
    }
    if weights_violation(spec, mass_a, mass_b) {
        violated.push(Hypothesis::Ab);
    }
    if domain_violation(spec) {
        violated.push(Hypothesis::Omega);
    }
    ValidationReport { ok: violated.is_empty(), violated_hypotheses: violated, mass_a, mass_b }
}

/// Validation for the pure q-Laplacian path: only `q >= 2` is required of the
/// exponents and `p` is ignored.
pub fn validate_q_problem<T: Real>(spec: &ProblemSpec<T>) -> ValidationReport<T> {
    let (mass_a, mass_b) = masses(spec);
    let mut violated = Vec::new();
    if !(spec.q >= T::c(2.0)) {
        violated.push(Hypothesis::Pq);
    }
    if weights_violation(spec, mass_a, mass_b) {
        violated.push(Hypothesis::Ab);
    }
    if domain_violation(spec) {
        violated.push(Hypothesis::Omega);
    }
    ValidationReport { ok: violated.is_empty(), violated_hypotheses: violated, mass_a, mass_b }
}

/// Declarative weight description.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightExpr<T> {
    Constant(T),
    /// `value` on the half-open box `lower <= x < upper` (per coordinate,
    /// `None` meaning unbounded), zero elsewhere.
    Indicator { lower: [Option<T>; 2], upper: [Option<T>; 2], value: T },
    NodalTable(Vec<T>),
}

/// Where a weight lives; boundary weights are zeroed off the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightTarget {
    Volume,
    Boundary,
}

pub fn weight_from_expression<T: Real>(mesh: &Mesh<T>, expr: &WeightExpr<T>, target: WeightTarget) -> Result<Vec<T>> {
    let mut values: Vec<T> = match expr {
        WeightExpr::Constant(c) => {
            if *c < T::zero() {
                return Err(Error::NegativeWeight { index: 0, value: c.to_f64_lossy() });
            }
            vec![*c; mesh.node_count()]
        }
        WeightExpr::Indicator { lower, upper, value } => {
            if *value < T::zero() {
                return Err(Error::NegativeWeight { index: 0, value: value.to_f64_lossy() });
            }
            mesh.nodes()
                .iter()
                .map(|x| {
                    let inside = (0..2).all(|d| {
                        lower[d].is_none_or(|lo| x[d] >= lo) && upper[d].is_none_or(|hi| x[d] < hi)
                    });
                    if inside {
                        *value
                    } else {
                        T::zero()
                    }
                })
                .collect()
        }
        WeightExpr::NodalTable(table) => {
            if table.len() != mesh.node_count() {
                return Err(Error::LengthMismatch { expected: mesh.node_count(), found: table.len() });
            }
            if let Some((index, v)) = table.iter().enumerate().find(|(_, v)| **v < T::zero() || !v.is_finite()) {
                return Err(Error::NegativeWeight { index, value: v.to_f64_lossy() });
            }
            table.clone()
        }
    };
    if target == WeightTarget::Boundary {
        for (i, v) in values.iter_mut().enumerate() {
            if !mesh.is_boundary_node(i) {
                *v = T::zero();
            }
        }
    }
    Ok(values)
}

/// `int a phi^(q-1) dx` and `int b phi^(q-1) dsigma` for the hat function of
/// every node.
fn hat_thetas<T: Real>(spec: &ProblemSpec<T>) -> (Vec<T>, Vec<T>) {
    let mesh = &spec.mesh;
    let r = spec.q - T::one();
    let n = mesh.node_count();
    let (a, b) = (spec.a(), spec.b());
    let mut theta_a = vec![T::zero(); n];
    let mut theta_b = vec![T::zero(); n];
    let rule = mesh.volume_rule();
    for (e, el) in mesh.elements().iter().enumerate() {
        let verts = mesh.element_nodes(e);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let aq = Mesh::interpolate_at(verts, bary, a);
            for (k, &v) in verts.iter().enumerate() {
                theta_a[v] = theta_a[v] + el.measure * w * aq * abs_pow(bary[k], r);
            }
        }
    }
    let rule = mesh.boundary_rule();
    for (f, facet) in mesh.boundary_facets().iter().enumerate() {
        let verts = mesh.facet_nodes(f);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let bq = Mesh::interpolate_at(verts, bary, b);
            for (k, &v) in verts.iter().enumerate() {
                theta_b[v] = theta_b[v] + facet.measure * w * bq * abs_pow(bary[k], r);
            }
        }
    }
    (theta_a, theta_b)
}

fn share_element<T: Real>(mesh: &Mesh<T>, support: &[Vec<usize>], i: usize, j: usize) -> bool {
    let _ = mesh;
    support[i].iter().any(|e| support[j].contains(e))
}

fn pick_disjoint_pair<T: Real>(mesh: &Mesh<T>, support: &[Vec<usize>], candidates: &[usize]) -> Option<(usize, usize)> {
    let first = *candidates.first()?;
    let x1 = mesh.nodes()[first];
    candidates
        .iter()
        .copied()
        .filter(|&j| j != first && !share_element(mesh, support, first, j))
        .map(|j| {
            let x = mesh.nodes()[j];
            let d = (x[0] - x1[0]) * (x[0] - x1[0]) + (x[1] - x1[1]) * (x[1] - x1[1]);
            (j, d)
        })
        .fold(None, |best: Option<(usize, T)>, (j, d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((j, d)),
        })
        .map(|(j, _)| (first, j))
}

/// Nonzero cone element `sigma_1 u_1 - sigma_2 u_2` built from two hat
/// functions with disjoint supports, `sigma_k = theta_k^(-1/(q-1))`.
///
/// When the volume weight has positive mass the bumps sit at interior nodes
/// where `a` is active; otherwise they sit at boundary nodes where `b` is.
pub fn bump_pair_seed<T: Real>(spec: &ProblemSpec<T>) -> Result<DiscreteField<T>> {
    let mesh = &spec.mesh;
    if !(spec.q >= T::c(2.0)) {
        return Err(Error::InvalidExponent(format!("q = {} < 2", spec.q)));
    }
    let (theta_a, theta_b) = hat_thetas(spec);
    let n = mesh.node_count();
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in 0..mesh.elements().len() {
        for &v in mesh.element_nodes(e) {
            support[v].push(e);
        }
    }

    let interior_a: Vec<usize> = (0..n)
        .filter(|&i| !mesh.is_boundary_node(i) && theta_a[i] > T::zero())
        .collect();
    let any_active: Vec<usize> = (0..n).filter(|&i| theta_a[i] + theta_b[i] > T::zero()).collect();
    let boundary_b: Vec<usize> = mesh
        .boundary_nodes()
        .iter()
        .copied()
        .filter(|&i| theta_b[i] > T::zero())
        .collect();

    let has_a = theta_a.iter().any(|t| *t > T::zero());
    let pair = if has_a {
        pick_disjoint_pair(mesh, &support, &interior_a).or_else(|| pick_disjoint_pair(mesh, &support, &any_active))
    } else {
        pick_disjoint_pair(mesh, &support, &boundary_b)
    };
    let (i1, i2) = pair.ok_or_else(|| {
        Error::SeedUnavailable("no two nodes with active weight have disjoint supports; refine the mesh".into())
    })?;

    let inv = -T::one() / (spec.q - T::one());
    let sigma = |i: usize| (theta_a[i] + theta_b[i]).powf(inv);
    let mut v = vec![T::zero(); n];
    v[i1] = sigma(i1);
    v[i2] = -sigma(i2);
    Ok(spec.field_unchecked(v))
}
