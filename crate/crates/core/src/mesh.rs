//! Structured meshes, P1 assembly and discrete function spaces.
//!
//! Two geometries are supported: the unit interval split into uniform
//! elements, and the unit square split into `n × n` cells with each cell
//! cut into two right triangles along its diagonal. Coefficient fields
//! are piecewise constant per element, so every bilinear form below is
//! integrated exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, BandCholesky, SparseMatrix};

/// Uniform grid on (0, 1) with `n_interior` interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n_interior: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::SpaceMismatch("Grid1D needs at least one interior node".into()));
        }
        Ok(Self {
            n_interior,
            h: 1.0 / (n_interior as f64 + 1.0),
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_interior + 2
    }

    pub fn n_elements(&self) -> usize {
        self.n_interior + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 / (self.n_interior as f64 + 1.0)
    }
}

/// Triangulation of a planar domain with outward-oriented boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
}

impl Mesh2D {
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let mesh = Self {
            nodes,
            triangles,
            boundary_edges,
        };
        for (index, _) in mesh.triangles.iter().enumerate() {
            let area = mesh.signed_area(index);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { index, area });
            }
        }
        Ok(mesh)
    }

    /// Unit square with `n × n` cells, two triangles per cell.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::SpaceMismatch("unit_square needs n >= 1".into()));
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let nodes = (0..=n)
            .flat_map(|j| (0..=n).map(move |i| [i as f64 / n as f64, j as f64 / n as f64]))
            .collect();
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut boundary_edges = Vec::with_capacity(4 * n);
        boundary_edges.extend((0..n).map(|i| [id(i, 0), id(i + 1, 0)]));
        boundary_edges.extend((0..n).map(|j| [id(n, j), id(n, j + 1)]));
        boundary_edges.extend((0..n).rev().map(|i| [id(i + 1, n), id(i, n)]));
        boundary_edges.extend((0..n).rev().map(|j| [id(0, j + 1), id(0, j)]));
        Self::new(nodes, triangles, boundary_edges)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|k| self.nodes[k]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|k| self.nodes[k]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e].map(|k| self.nodes[k]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Gradients of the three barycentric coordinates (constant per triangle).
    fn shape_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.triangles[t].map(|k| self.nodes[k]);
        let two_a = 2.0 * self.signed_area(t);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            g[i] = [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a];
        }
        g
    }
}

/// A mesh of either supported dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Interval(Grid1D),
    Square(Mesh2D),
}

impl Geometry {
    pub fn n_nodes(&self) -> usize {
        match self {
            Self::Interval(g) => g.n_nodes(),
            Self::Square(m) => m.nodes.len(),
        }
    }

    pub fn n_elements(&self) -> usize {
        match self {
            Self::Interval(g) => g.n_elements(),
            Self::Square(m) => m.triangles.len(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Interval(_) => 1,
            Self::Square(_) => 2,
        }
    }

    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        match self {
            Self::Interval(g) => [g.node(k), 0.0],
            Self::Square(m) => m.nodes[k],
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        match self {
            Self::Interval(g) => vec![0, g.n_nodes() - 1],
            Self::Square(m) => m.boundary_edges.iter().map(|e| e[0]).collect(),
        }
    }

    /// Number of coefficient regions: quadrants in 2D, a single region in 1D.
    pub fn n_regions(&self) -> usize {
        match self {
            Self::Interval(_) => 1,
            Self::Square(_) => 4,
        }
    }

    /// Region of element `e` (quadrant index `[x >= 1/2] + 2 [y >= 1/2]`).
    pub fn element_region(&self, e: usize) -> usize {
        match self {
            Self::Interval(_) => 0,
            Self::Square(m) => {
                let c = m.centroid(e);
                usize::from(c[0] >= 0.5) + 2 * usize::from(c[1] >= 0.5)
            }
        }
    }

    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        match self {
            Self::Interval(_) => vec![e, e + 1],
            Self::Square(m) => m.triangles[e].to_vec(),
        }
    }

    /// Node-level `∫ c ∇φᵢ·∇φⱼ` triplets for a per-element coefficient.
    pub fn stiffness_triplets(&self, coeff: &[f64]) -> Vec<(usize, usize, f64)> {
        assert_eq!(coeff.len(), self.n_elements());
        let mut out = Vec::new();
        match self {
            Self::Interval(g) => {
                for (e, &c) in coeff.iter().enumerate() {
                    let k = c / g.h;
                    out.extend([(e, e, k), (e, e + 1, -k), (e + 1, e, -k), (e + 1, e + 1, k)]);
                }
            }
            Self::Square(m) => {
                for (t, &c) in coeff.iter().enumerate() {
                    let area = m.signed_area(t);
                    let grads = m.shape_gradients(t);
                    let nodes = m.triangles[t];
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = c * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                            out.push((nodes[i], nodes[j], v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Node-level `∫ c φᵢ φⱼ` triplets for a per-element coefficient.
    pub fn mass_triplets(&self, coeff: &[f64]) -> Vec<(usize, usize, f64)> {
        assert_eq!(coeff.len(), self.n_elements());
        let mut out = Vec::new();
        match self {
            Self::Interval(g) => {
                for (e, &c) in coeff.iter().enumerate() {
                    let (d, o) = (c * g.h / 3.0, c * g.h / 6.0);
                    out.extend([(e, e, d), (e, e + 1, o), (e + 1, e, o), (e + 1, e + 1, d)]);
                }
            }
            Self::Square(m) => {
                for (t, &c) in coeff.iter().enumerate() {
                    let area = m.signed_area(t);
                    let nodes = m.triangles[t];
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = c * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                            out.push((nodes[i], nodes[j], v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Node-level `∫_{∂D} c φᵢ φⱼ` triplets; empty for the interval.
    pub fn boundary_mass_triplets(&self, coeff: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        if let Self::Square(m) = self {
            for (e, &[a, b]) in m.boundary_edges.iter().enumerate() {
                let len = m.edge_length(e);
                let (d, o) = (coeff * len / 3.0, coeff * len / 6.0);
                out.extend([(a, a, d), (a, b, o), (b, a, o), (b, b, d)]);
            }
        }
        out
    }

    /// `∫ φᵢ` per node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (i, _, v) in self.mass_triplets(&vec![1.0; self.n_elements()]) {
            out[i] += v;
        }
        out
    }

    /// Exact `∫ max(0, f)²` and `∫ max(0, f) φᵢ` for a nodal P1 field `f` (2D only).
    ///
    /// Each triangle is clipped to `{f > 0}`; the clipped polygon is fanned
    /// into sub-triangles on which `f` and `φᵢ` are both linear.
    pub fn positive_part_integrals(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let Self::Square(m) = self else {
            panic!("positive_part_integrals is implemented for 2D meshes");
        };
        assert_eq!(f.len(), m.nodes.len());
        let mut value = 0.0;
        let mut grad = vec![0.0; f.len()];
        for (t, tri) in m.triangles.iter().enumerate() {
            let fv = tri.map(|k| f[k]);
            if fv.iter().all(|&v| v <= 0.0) {
                continue;
            }
            let pts = tri.map(|k| m.nodes[k]);
            // polygon vertices: (coords, f value, barycentric coords)
            let mut poly: Vec<([f64; 2], f64, [f64; 3])> = Vec::with_capacity(4);
            for i in 0..3 {
                let j = (i + 1) % 3;
                let mut bi = [0.0; 3];
                bi[i] = 1.0;
                if fv[i] >= 0.0 {
                    poly.push((pts[i], fv[i], bi));
                }
                if (fv[i] > 0.0 && fv[j] < 0.0) || (fv[i] < 0.0 && fv[j] > 0.0) {
                    let s = fv[i] / (fv[i] - fv[j]);
                    let mut bc = [0.0; 3];
                    bc[i] = 1.0 - s;
                    bc[j] = s;
                    let p = [
                        pts[i][0] + s * (pts[j][0] - pts[i][0]),
                        pts[i][1] + s * (pts[j][1] - pts[i][1]),
                    ];
                    poly.push((p, 0.0, bc));
                }
            }
            if poly.len() < 3 {
                continue;
            }
            let _ = t;
            for k in 1..poly.len() - 1 {
                let sub = [poly[0], poly[k], poly[k + 1]];
                let area = 0.5
                    * ((sub[1].0[0] - sub[0].0[0]) * (sub[2].0[1] - sub[0].0[1])
                        - (sub[2].0[0] - sub[0].0[0]) * (sub[1].0[1] - sub[0].0[1]))
                        .abs();
                if area == 0.0 {
                    continue;
                }
                let fs = [sub[0].1, sub[1].1, sub[2].1];
                value += linear_product_integral(area, &fs, &fs);
                for (local, &node) in tri.iter().enumerate() {
                    let phi = [sub[0].2[local], sub[1].2[local], sub[2].2[local]];
                    grad[node] += linear_product_integral(area, &fs, &phi);
                }
            }
        }
        (value, grad)
    }
}

/// `∫_T a b` for linear `a`, `b` given by vertex values on a triangle of area `area`.
fn linear_product_integral(area: f64, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let diag: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    area / 12.0 * (diag + sa * sb)
}

/// Which function space a [`DiscreteSpace`] realizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceKind {
    /// All nodes, norm `(‖v‖² + ‖∇v‖²)^{1/2}`.
    H1,
    /// Interior nodes, norm `‖∇v‖`.
    H01,
    /// All nodes, L² norm.
    L2Domain,
    /// Boundary nodes of a 2D mesh, L²(∂D) norm.
    L2Boundary,
    /// Nodes of the sub-interval `[lo, hi]` of a 1D grid, L²(lo, hi) norm.
    L2Subdomain { lo: f64, hi: f64 },
}

/// A discrete function space: DOF map, mass/stiffness and the norm Gram matrix.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    kind: SpaceKind,
    geometry: Arc<Geometry>,
    dofs: Vec<usize>,
    node_to_dof: Vec<Option<usize>>,
    elements: Vec<bool>,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    boundary_mass: Option<SparseMatrix>,
    lumped: Vec<f64>,
    gram: SparseMatrix,
    gram_factor: BandCholesky,
}

impl DiscreteSpace {
    pub fn new(geometry: Arc<Geometry>, kind: SpaceKind) -> Result<Self> {
        let n_nodes = geometry.n_nodes();
        let boundary = geometry.boundary_nodes();
        let mut on_boundary = vec![false; n_nodes];
        boundary.iter().for_each(|&k| on_boundary[k] = true);

        let mut elements = vec![true; geometry.n_elements()];
        let dofs: Vec<usize> = match (kind, geometry.as_ref()) {
            (SpaceKind::H1 | SpaceKind::L2Domain, _) => (0..n_nodes).collect(),
            (SpaceKind::H01, _) => (0..n_nodes).filter(|&k| !on_boundary[k]).collect(),
            (SpaceKind::L2Boundary, Geometry::Square(_)) => boundary.clone(),
            (SpaceKind::L2Subdomain { lo, hi }, Geometry::Interval(g)) => {
                if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                    return Err(Error::SpaceMismatch(format!("bad subdomain ({lo}, {hi})")));
                }
                let tol = 1e-12;
                for (e, keep) in elements.iter_mut().enumerate() {
                    *keep = g.node(e) >= lo - tol && g.node(e + 1) <= hi + tol;
                }
                if !elements.iter().any(|&k| k) {
                    return Err(Error::SpaceMismatch("subdomain contains no element".into()));
                }
                let mut used = vec![false; n_nodes];
                for (e, _) in elements.iter().enumerate().filter(|(_, &k)| k) {
                    used[e] = true;
                    used[e + 1] = true;
                }
                (0..n_nodes).filter(|&k| used[k]).collect()
            }
            (kind, _) => {
                return Err(Error::SpaceMismatch(format!(
                    "{kind:?} is not available on a {}D geometry",
                    geometry.dimension()
                )))
            }
        };
        let mut node_to_dof = vec![None; n_nodes];
        for (d, &k) in dofs.iter().enumerate() {
            node_to_dof[k] = Some(d);
        }

        let coeff: Vec<f64> = elements.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        let restrict = |t: Vec<(usize, usize, f64)>| {
            SparseMatrix::from_triplets(
                dofs.len(),
                dofs.len(),
                t.into_iter().filter_map(|(i, j, v)| {
                    (v != 0.0).then_some((node_to_dof[i]?, node_to_dof[j]?, v))
                }),
            )
        };
        let (mass, stiffness, boundary_mass) = if kind == SpaceKind::L2Boundary {
            let bm = restrict(geometry.boundary_mass_triplets(1.0));
            (bm, SparseMatrix::zeros(dofs.len(), dofs.len()), None)
        } else {
            let bm = (geometry.dimension() == 2)
                .then(|| restrict(geometry.boundary_mass_triplets(1.0)));
            (
                restrict(geometry.mass_triplets(&coeff)),
                restrict(geometry.stiffness_triplets(&coeff)),
                bm,
            )
        };
        let lumped = mass.row_sums();
        let gram = match kind {
            SpaceKind::H1 => mass.add_scaled(&stiffness, 1.0),
            SpaceKind::H01 => stiffness.clone(),
            _ => mass.clone(),
        };
        let gram_factor = BandCholesky::factor(&gram)?;
        Ok(Self {
            kind,
            geometry,
            dofs,
            node_to_dof,
            elements,
            mass,
            stiffness,
            boundary_mass,
            lumped,
            gram,
            gram_factor,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Mesh node of each DOF.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn boundary_mass(&self) -> Option<&SparseMatrix> {
        self.boundary_mass.as_ref()
    }

    /// Row sums of the mass matrix (`∫ φᵢ` over the space's support).
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    /// Matrix of the space's own inner product.
    pub fn gram(&self) -> &SparseMatrix {
        &self.gram
    }

    pub fn gram_factor(&self) -> &BandCholesky {
        &self.gram_factor
    }

    /// Whether element `e` belongs to the space's support.
    pub fn has_element(&self, e: usize) -> bool {
        self.elements[e]
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.gram.bilinear(a, b)
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.gram.quad_form(v).max(0.0).sqrt()
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v).max(0.0).sqrt()
    }

    /// `‖∇v‖`.
    pub fn h01_seminorm(&self, v: &[f64]) -> f64 {
        self.stiffness.quad_form(v).max(0.0).sqrt()
    }

    /// `(‖v‖² + ‖∇v‖²)^{1/2}`.
    pub fn h1_norm(&self, v: &[f64]) -> f64 {
        (self.mass.quad_form(v) + self.stiffness.quad_form(v)).max(0.0).sqrt()
    }

    /// Riesz representative `G⁻¹ r` of a dual vector.
    pub fn riesz(&self, r: &[f64]) -> Vec<f64> {
        self.gram_factor.solve(r)
    }

    /// Dual norm `(rᵀ G⁻¹ r)^{1/2}`.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        linalg::dot(r, &self.riesz(r)).max(0.0).sqrt()
    }

    /// Zero-extends DOF values to all mesh nodes.
    pub fn extend_to_nodes(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.geometry.n_nodes()];
        for (&k, &x) in self.dofs.iter().zip(v) {
            out[k] = x;
        }
        out
    }

    pub fn restrict_from_nodes(&self, nodal: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&k| nodal[k]).collect()
    }

    /// Nodal interpolant of `f(x, y)` (`y = 0` in 1D).
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.dofs
            .iter()
            .map(|&k| {
                let [x, y] = self.geometry.node_coords(k);
                f(x, y)
            })
            .collect()
    }

    /// Maps node-level triplets onto this space's DOFs, dropping the rest.
    pub fn restrict_triplets(&self, t: Vec<(usize, usize, f64)>) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.dim(),
            self.dim(),
            t.into_iter()
                .filter_map(|(i, j, v)| Some((self.node_to_dof[i]?, self.node_to_dof[j]?, v))),
        )
    }

    /// Rectangular `rows = self, cols = other` version of [`Self::restrict_triplets`].
    pub fn coupling_matrix(&self, other: &DiscreteSpace, t: Vec<(usize, usize, f64)>) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.dim(),
            other.dim(),
            t.into_iter()
                .filter_map(|(i, j, v)| Some((self.node_to_dof[i]?, other.node_to_dof[j]?, v))),
        )
    }
}

/// Coefficient vector tied to the space it lives in.
#[derive(Debug, Clone)]
pub struct FieldVector {
    space: Arc<DiscreteSpace>,
    coeffs: Vec<f64>,
}

impl FieldVector {
    pub fn new(space: Arc<DiscreteSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::SpaceMismatch(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.space.norm(&self.coeffs)
    }
}

/// Assembles a space on a 1D grid.
pub fn assemble_1d(grid: Grid1D, kind: SpaceKind) -> Result<DiscreteSpace> {
    DiscreteSpace::new(Arc::new(Geometry::Interval(grid)), kind)
}

/// Assembles a space on a 2D mesh.
pub fn assemble_2d(mesh: Mesh2D, kind: SpaceKind) -> Result<DiscreteSpace> {
    DiscreteSpace::new(Arc::new(Geometry::Square(mesh)), kind)
}

/// `∫ c ∇v·∇w` restricted to the space's DOFs, for a per-element coefficient.
pub fn weighted_stiffness(space: &DiscreteSpace, coeff: &[f64]) -> Result<SparseMatrix> {
    if space.kind == SpaceKind::L2Boundary {
        return Err(Error::SpaceMismatch("no stiffness on a boundary space".into()));
    }
    if coeff.len() != space.geometry.n_elements() {
        return Err(Error::SpaceMismatch(format!(
            "{} coefficients for {} elements",
            coeff.len(),
            space.geometry.n_elements()
        )));
    }
    if let Some((element, &value)) = coeff.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
        return Err(Error::NonpositiveCoefficient { element, value });
    }
    let masked: Vec<f64> = coeff
        .iter()
        .enumerate()
        .map(|(e, &c)| if space.has_element(e) { c } else { 0.0 })
        .collect();
    Ok(space.restrict_triplets(space.geometry.stiffness_triplets(&masked)))
}

/// Friedrichs' constant `sup ‖v‖/‖∇v‖` of an `H01` space.
pub fn friedrichs_constant(space: &DiscreteSpace) -> Result<f64> {
    if space.kind != SpaceKind::H01 {
        return Err(Error::SpaceMismatch(format!(
            "Friedrichs' constant needs an H01 space, got {:?}",
            space.kind
        )));
    }
    let lambda = linalg::smallest_generalized_eigenvalue(&space.stiffness, &space.mass)?;
    Ok(1.0 / lambda.sqrt())
}

/// Restriction of nodal values to boundary nodes, as a matrix `boundary × H1`.
pub fn trace_operator(h1: &DiscreteSpace, boundary: &DiscreteSpace) -> Result<SparseMatrix> {
    if h1.kind != SpaceKind::H1 || boundary.kind != SpaceKind::L2Boundary {
        return Err(Error::SpaceMismatch("trace maps H1 to L2Boundary".into()));
    }
    if h1.geometry != boundary.geometry {
        return Err(Error::SpaceMismatch("trace spaces live on different meshes".into()));
    }
    Ok(SparseMatrix::from_triplets(
        boundary.dim(),
        h1.dim(),
        boundary
            .dofs
            .iter()
            .enumerate()
            .filter_map(|(b, &k)| Some((b, h1.node_to_dof[k]?, 1.0))),
    ))
}

pub fn trace_apply(y: &FieldVector, boundary: &Arc<DiscreteSpace>) -> Result<FieldVector> {
    let t = trace_operator(&y.space, boundary)?;
    FieldVector::new(boundary.clone(), t.matvec(&y.coeffs))
}

/// Operator norm of the trace `H1 → L²(∂D)` (dense symmetric eigensolve).
pub fn trace_constant(h1: &DiscreteSpace, boundary: &DiscreteSpace) -> Result<f64> {
    let t = trace_operator(h1, boundary)?;
    let a = SparseMatrix::from_triplets(
        h1.dim(),
        h1.dim(),
        boundary
            .mass
            .triplets()
            .map(|(i, j, v)| (t.row(i).next().unwrap().0, t.row(j).next().unwrap().0, v)),
    );
    let eig = linalg::generalized_eigenvalues(&a, &h1.gram)?;
    Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
