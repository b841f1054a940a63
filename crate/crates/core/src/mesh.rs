//! Simplicial meshes with P1 elements and the quadrature-backed integrals the
//! energies are built from.
//!
//! Nodes always carry two coordinates; one-dimensional meshes keep `y = 0`.
//! Element and facet vertex arrays are padded: an interval element uses the
//! first two entries of `nodes`, a point facet the first entry.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar::{abs_pow, signed_pow, Real};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone)]
pub struct Element<T> {
    pub nodes: [usize; 3],
    pub measure: T,
    /// Constant gradients of the local P1 basis functions.
    pub basis_gradients: [[T; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct BoundaryFacet<T> {
    pub nodes: [usize; 2],
    /// Index of the element this facet bounds.
    pub parent: usize,
    /// Length of an edge, or 1 for the endpoint of an interval.
    pub measure: T,
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    id: MeshId,
    dimension: usize,
    nodes: Vec<[T; 2]>,
    elements: Vec<Element<T>>,
    boundary_facets: Vec<BoundaryFacet<T>>,
    volume_rule: QuadratureRule<T>,
    boundary_rule: QuadratureRule<T>,
    boundary_nodes: Vec<usize>,
    is_boundary: Vec<bool>,
    bandwidth: usize,
}

impl<T: Real> Mesh<T> {
    fn assemble(
        dimension: usize,
        nodes: Vec<[T; 2]>,
        simplices: Vec<[usize; 3]>,
        facets: Vec<([usize; 2], usize)>,
    ) -> Result<Self> {
        let verts = dimension + 1;
        let mut elements = Vec::with_capacity(simplices.len());
        for (e, s) in simplices.iter().enumerate() {
            let el = if dimension == 1 {
                let h = nodes[s[1]][0] - nodes[s[0]][0];
                let inv = T::one() / h;
                Element {
                    nodes: *s,
                    measure: h,
                    basis_gradients: [[-inv, T::zero()], [inv, T::zero()], [T::zero(); 2]],
                }
            } else {
                let [x0, y0] = nodes[s[0]];
                let [x1, y1] = nodes[s[1]];
                let [x2, y2] = nodes[s[2]];
                let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
                Element {
                    nodes: *s,
                    measure: det / T::c(2.0),
                    basis_gradients: [
                        [(y1 - y2) / det, (x2 - x1) / det],
                        [(y2 - y0) / det, (x0 - x2) / det],
                        [(y0 - y1) / det, (x1 - x0) / det],
                    ],
                }
            };
            if !(el.measure > T::zero()) {
                return Err(Error::InvalidMesh(format!("element {e} has non-positive measure")));
            }
            elements.push(el);
        }

        let boundary_facets: Vec<BoundaryFacet<T>> = facets
            .into_iter()
            .map(|(f, parent)| {
                let measure = if dimension == 1 {
                    T::one()
                } else {
                    let [xa, ya] = nodes[f[0]];
                    let [xb, yb] = nodes[f[1]];
                    ((xb - xa) * (xb - xa) + (yb - ya) * (yb - ya)).sqrt()
                };
                BoundaryFacet { nodes: f, parent, measure }
            })
            .collect();

        let mut is_boundary = vec![false; nodes.len()];
        for f in &boundary_facets {
            for &n in &f.nodes[..dimension] {
                is_boundary[n] = true;
            }
        }
        let boundary_nodes = (0..nodes.len()).filter(|&i| is_boundary[i]).collect();

        let bandwidth = elements
            .iter()
            .map(|el| {
                let v = &el.nodes[..verts];
                let lo = v.iter().min().copied().unwrap_or(0);
                let hi = v.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0);

        let (volume_rule, boundary_rule) = if dimension == 1 {
            (QuadratureRule::gauss_segment(), QuadratureRule::point())
        } else {
            (QuadratureRule::dunavant_triangle(), QuadratureRule::gauss_segment())
        };

        Ok(Mesh {
            id: MeshId::fresh(),
            dimension,
            nodes,
            elements,
            boundary_facets,
            volume_rule,
            boundary_rule,
            boundary_nodes,
            is_boundary,
            bandwidth,
        })
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element<T>] {
        &self.elements
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet<T>] {
        &self.boundary_facets
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    /// Vertices of element `e` (two in 1D, three in 2D).
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.elements[e].nodes[..self.dimension + 1]
    }

    pub fn facet_nodes(&self, f: usize) -> &[usize] {
        &self.boundary_facets[f].nodes[..self.dimension]
    }

    pub fn volume_rule(&self) -> &QuadratureRule<T> {
        &self.volume_rule
    }

    pub fn boundary_rule(&self) -> &QuadratureRule<T> {
        &self.boundary_rule
    }

    /// Largest index distance between two nodes sharing an element.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Measure of the domain (length or area).
    pub fn measure(&self) -> T {
        self.elements.iter().map(|e| e.measure).sum()
    }

    /// Measure of the boundary (number of endpoints in 1D, perimeter in 2D).
    pub fn boundary_measure(&self) -> T {
        self.boundary_facets.iter().map(|f| f.measure).sum()
    }

    /// Physical quadrature points and weights of element `e`.
    pub fn volume_quadrature(&self, e: usize) -> Vec<([T; 2], T)> {
        let verts = self.element_nodes(e);
        let measure = self.elements[e].measure;
        self.volume_rule
            .points
            .iter()
            .zip(&self.volume_rule.weights)
            .map(|(bary, &w)| (self.map_point(verts, bary), w * measure))
            .collect()
    }

    /// Physical quadrature points and weights of boundary facet `f`.
    pub fn boundary_quadrature(&self, f: usize) -> Vec<([T; 2], T)> {
        let verts = self.facet_nodes(f);
        let measure = self.boundary_facets[f].measure;
        self.boundary_rule
            .points
            .iter()
            .zip(&self.boundary_rule.weights)
            .map(|(bary, &w)| (self.map_point(verts, bary), w * measure))
            .collect()
    }

    fn map_point(&self, verts: &[usize], bary: &[T; 3]) -> [T; 2] {
        let mut x = [T::zero(); 2];
        for (k, &v) in verts.iter().enumerate() {
            x[0] = x[0] + bary[k] * self.nodes[v][0];
            x[1] = x[1] + bary[k] * self.nodes[v][1];
        }
        x
    }

    /// Gradient of a P1 field on element `e`.
    ///
    /// Differences against the first vertex make the result exactly zero for
    /// constant fields.
    #[inline]
    pub fn element_gradient(&self, e: usize, values: &[T]) -> [T; 2] {
        let el = &self.elements[e];
        let base = values[el.nodes[0]];
        let mut g = [T::zero(); 2];
        for k in 1..=self.dimension {
            let d = values[el.nodes[k]] - base;
            g[0] = g[0] + d * el.basis_gradients[k][0];
            g[1] = g[1] + d * el.basis_gradients[k][1];
        }
        g
    }

    /// Interpolates nodal values at the reference points of `rule` on the
    /// simplex with vertices `verts`.
    #[inline]
    pub(crate) fn interpolate_at(verts: &[usize], bary: &[T; 3], values: &[T]) -> T {
        let mut s = T::zero();
        for (k, &v) in verts.iter().enumerate() {
            s = s + bary[k] * values[v];
        }
        s
    }
}

/// Uniform partition of `[x0, x1]` into `n_elements` intervals.
pub fn build_interval_mesh<T: Real>(n_elements: usize, x0: T, x1: T) -> Result<Mesh<T>> {
    if n_elements < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 elements, got {n_elements}")));
    }
    if !(x0 < x1) || !x0.is_finite() || !x1.is_finite() {
        return Err(Error::InvalidMesh(format!("degenerate interval [{x0}, {x1}]")));
    }
    let n = T::from_count(n_elements);
    let nodes: Vec<[T; 2]> = (0..=n_elements)
        .map(|i| {
            let s = T::from_count(i) / n;
            [x0 + (x1 - x0) * s, T::zero()]
        })
        .collect();
    let simplices = (0..n_elements).map(|i| [i, i + 1, 0]).collect();
    let facets = vec![([0, 0], 0), ([n_elements, 0], n_elements - 1)];
    Mesh::assemble(1, nodes, simplices, facets)
}

/// Structured triangulation of `[x0, x1] x [y0, y1]`; each cell is split along
/// its lower-left to upper-right diagonal.
pub fn build_rectangle_mesh<T: Real>(nx: usize, ny: usize, bounds: (T, T, T, T)) -> Result<Mesh<T>> {
    let (x0, x1, y0, y1) = bounds;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 cells per direction, got {nx}x{ny}")));
    }
    if !(x0 < x1) || !(y0 < y1) {
        return Err(Error::InvalidMesh("degenerate rectangle bounds".into()));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = y0 + (y1 - y0) * T::from_count(j) / T::from_count(ny);
        for i in 0..=nx {
            let x = x0 + (x1 - x0) * T::from_count(i) / T::from_count(nx);
            nodes.push([x, y]);
        }
    }
    let mut simplices = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            simplices.push([v00, v10, v11]);
            simplices.push([v00, v11, v01]);
        }
    }
    let cell = |i: usize, j: usize, lower: bool| 2 * (j * nx + i) + usize::from(!lower);
    let mut facets = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        facets.push(([idx(i, 0), idx(i + 1, 0)], cell(i, 0, true)));
    }
    for j in 0..ny {
        facets.push(([idx(nx, j), idx(nx, j + 1)], cell(nx - 1, j, true)));
    }
    for i in (0..nx).rev() {
        facets.push(([idx(i + 1, ny), idx(i, ny)], cell(i, ny - 1, false)));
    }
    for j in (0..ny).rev() {
        facets.push(([idx(0, j + 1), idx(0, j)], cell(0, j, false)));
    }
    Mesh::assemble(2, nodes, simplices, facets)
}

/// Nodal coefficient vector of a P1 function on a specific mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField<T> {
    mesh_id: MeshId,
    coefficients: Vec<T>,
}

impl<T: Real> DiscreteField<T> {
    pub fn new(mesh: &Mesh<T>, coefficients: Vec<T>) -> Result<Self> {
        if coefficients.len() != mesh.node_count() {
            return Err(Error::LengthMismatch { expected: mesh.node_count(), found: coefficients.len() });
        }
        if let Some(index) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { mesh_id: mesh.id(), coefficients })
    }

    pub(crate) fn from_raw(mesh_id: MeshId, coefficients: Vec<T>) -> Self {
        Self { mesh_id, coefficients }
    }

    pub fn zeros(mesh: &Mesh<T>) -> Self {
        Self::constant(mesh, T::zero())
    }

    pub fn constant(mesh: &Mesh<T>, c: T) -> Self {
        Self { mesh_id: mesh.id(), coefficients: vec![c; mesh.node_count()] }
    }

    /// Nodal interpolation of an analytic function.
    pub fn interpolate(mesh: &Mesh<T>, f: impl Fn([T; 2]) -> T) -> Result<Self> {
        Self::new(mesh, mesh.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn values(&self) -> &[T] {
        &self.coefficients
    }

    pub fn into_values(self) -> Vec<T> {
        self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn scaled(&self, t: T) -> Self {
        Self { mesh_id: self.mesh_id, coefficients: self.coefficients.iter().map(|&c| c * t).collect() }
    }

    pub fn shifted(&self, s: T) -> Self {
        Self { mesh_id: self.mesh_id, coefficients: self.coefficients.iter().map(|&c| c - s).collect() }
    }

    pub fn sup_norm(&self) -> T {
        self.coefficients.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| *c == T::zero())
    }

    /// Oscillation `max - min` of the nodal values.
    pub fn oscillation(&self) -> T {
        let (lo, hi) = min_max(&self.coefficients);
        hi - lo
    }

    pub(crate) fn check_mesh(&self, mesh: &Mesh<T>) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }
}

pub(crate) fn min_max<T: Real>(v: &[T]) -> (T, T) {
    v.iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &c| (lo.min(c), hi.max(c)))
}

fn check_exponent<T: Real>(r: T, signed: bool) -> Result<()> {
    if !r.is_finite() || r < T::one() {
        return Err(Error::InvalidExponent(format!("exponent {r} must be >= 1")));
    }
    if signed && r < T::c(2.0) {
        return Err(Error::InvalidExponent(format!("signed integrand needs exponent >= 2, got {r}")));
    }
    Ok(())
}

#[inline]
fn power_integrand<T: Real>(u: T, r: T, signed: bool) -> T {
    if signed {
        signed_pow(u, r)
    } else {
        abs_pow(u, r)
    }
}

/// `int_Omega w |u|^r dx`, or `int_Omega w |u|^(r-2) u dx` when `signed`.
pub fn volume_power_integral<T: Real>(
    mesh: &Mesh<T>,
    field: &DiscreteField<T>,
    weight: &DiscreteField<T>,
    exponent: T,
    signed: bool,
) -> Result<T> {
    field.check_mesh(mesh)?;
    weight.check_mesh(mesh)?;
    check_exponent(exponent, signed)?;
    let (u, w) = (field.values(), weight.values());
    let rule = mesh.volume_rule();
    let mut total = T::zero();
    for (e, el) in mesh.elements().iter().enumerate() {
        let verts = mesh.element_nodes(e);
        let mut acc = T::zero();
        for (bary, &qw) in rule.points.iter().zip(&rule.weights) {
            let uq = Mesh::interpolate_at(verts, bary, u);
            let wq = Mesh::interpolate_at(verts, bary, w);
            acc = acc + qw * wq * power_integrand(uq, exponent, signed);
        }
        total = total + acc * el.measure;
    }
    Ok(total)
}

/// Surface counterpart of [`volume_power_integral`]; only the boundary trace
/// of `field` and `weight` enters.
pub fn boundary_power_integral<T: Real>(
    mesh: &Mesh<T>,
    field: &DiscreteField<T>,
    weight: &DiscreteField<T>,
    exponent: T,
    signed: bool,
) -> Result<T> {
    field.check_mesh(mesh)?;
    weight.check_mesh(mesh)?;
    check_exponent(exponent, signed)?;
    let (u, w) = (field.values(), weight.values());
    let rule = mesh.boundary_rule();
    let mut total = T::zero();
    for (f, facet) in mesh.boundary_facets().iter().enumerate() {
        let verts = mesh.facet_nodes(f);
        let mut acc = T::zero();
        for (bary, &qw) in rule.points.iter().zip(&rule.weights) {
            let uq = Mesh::interpolate_at(verts, bary, u);
            let wq = Mesh::interpolate_at(verts, bary, w);
            acc = acc + qw * wq * power_integrand(uq, exponent, signed);
        }
        total = total + acc * facet.measure;
    }
    Ok(total)
}

/// `int_Omega |grad u|^r dx`, exact for P1 fields.
pub fn gradient_power_integral<T: Real>(mesh: &Mesh<T>, field: &DiscreteField<T>, exponent: T) -> Result<T> {
    field.check_mesh(mesh)?;
    if !exponent.is_finite() || exponent <= T::one() {
        return Err(Error::InvalidExponent(format!("gradient exponent {exponent} must be > 1")));
    }
    Ok(gradient_power_raw(mesh, field.values(), exponent))
}

pub(crate) fn gradient_power_raw<T: Real>(mesh: &Mesh<T>, u: &[T], r: T) -> T {
    mesh.elements()
        .iter()
        .enumerate()
        .map(|(e, el)| {
            let g = mesh.element_gradient(e, u);
            el.measure * abs_pow((g[0] * g[0] + g[1] * g[1]).sqrt(), r)
        })
        .sum()
}
