//! Finite element spaces for the last two forms of the 2D de Rham complex.
//!
//! Flux spaces (1-forms identified with H(div) vector fields):
//! RT0 = P⁻₁Λ¹, BDM1 = P₁Λ¹, RT1 = P⁻₂Λ¹. Density spaces (2-forms
//! identified with scalars): DG0 = P₀Λ², DG1 = P₁Λ².
//!
//! Reference bases are obtained by inverting the DOF matrix of a spanning
//! set; flux bases are pushed forward with the contravariant Piola map.
//! Edge DOFs are normal-flux moments against `q0 = 1` and `q1 = 2s - 1`,
//! where `s` runs along the globally oriented edge. With that choice the
//! global DOF equals the local one times the incidence sign for `q0` and is
//! orientation independent for `q1`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly;
use crate::linalg::{FactorError, SpdFactor};
use crate::mesh::{Point, SimplicialMesh, TriangleGeometry, LOCAL_EDGES};
use crate::quadrature::{LineRule, TriangleRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("inadmissible element: {family:?} family, degree {degree}, form order {form:?}")]
    Inadmissible {
        family: Family,
        degree: usize,
        form: FormOrder,
    },
    #[error("point ({0}, {1}) lies outside the reference triangle")]
    OutsideReference(f64, f64),
    #[error("operation needs a {expected:?} space, got {got:?}")]
    WrongFormOrder { expected: FormOrder, got: FormOrder },
    #[error("coefficient vector has length {got}, space has {expected} DOFs")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mass matrix factorization failed: {0}")]
    Mass(#[from] FactorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// P_r Λ^k
    Full,
    /// P⁻_r Λ^k
    Trimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormOrder {
    /// k = n - 1: vector fields in H(div).
    Flux,
    /// k = n: scalar densities in L².
    Density,
}

/// An admissible (family, degree, form order) triple. Trimmed densities are
/// stored in their full form, since P⁻_{r+1}Λ² = P_rΛ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementFamily {
    family: Family,
    degree: usize,
    form_order: FormOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rt0,
    Bdm1,
    Rt1,
    Dg0,
    Dg1,
}

impl ElementFamily {
    pub const RT0: Self = Self { family: Family::Trimmed, degree: 1, form_order: FormOrder::Flux };
    pub const RT1: Self = Self { family: Family::Trimmed, degree: 2, form_order: FormOrder::Flux };
    pub const BDM1: Self = Self { family: Family::Full, degree: 1, form_order: FormOrder::Flux };
    pub const DG0: Self = Self { family: Family::Full, degree: 0, form_order: FormOrder::Density };
    pub const DG1: Self = Self { family: Family::Full, degree: 1, form_order: FormOrder::Density };

    pub fn new(family: Family, degree: usize, form_order: FormOrder) -> Result<Self, ElementError> {
        let normalized = match (family, degree, form_order) {
            (Family::Trimmed, 1 | 2, FormOrder::Flux) | (Family::Full, 1, FormOrder::Flux) => {
                Self { family, degree, form_order }
            }
            (Family::Full, 0 | 1, FormOrder::Density) => Self { family, degree, form_order },
            (Family::Trimmed, 1 | 2, FormOrder::Density) => {
                Self { family: Family::Full, degree: degree - 1, form_order }
            }
            _ => return Err(ElementError::Inadmissible { family, degree, form: form_order }),
        };
        Ok(normalized)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn form_order(&self) -> FormOrder {
        self.form_order
    }

    /// The index `r` of the pairing Λ^{n-1}_h ∈ {P_{r+1}, P⁻_{r+1}},
    /// Λ^n_h = P_r.
    pub fn pairing_index(&self) -> usize {
        match self.form_order {
            FormOrder::Flux => self.degree - 1,
            FormOrder::Density => self.degree,
        }
    }

    /// Local dimension on one triangle.
    pub fn local_dimension(&self) -> usize {
        match self.kind() {
            Kind::Rt0 => 3,
            Kind::Bdm1 => 6,
            Kind::Rt1 => 8,
            Kind::Dg0 => 1,
            Kind::Dg1 => 3,
        }
    }

    /// Polynomial degree of the basis functions.
    pub fn polynomial_degree(&self) -> usize {
        match self.kind() {
            Kind::Rt0 | Kind::Bdm1 | Kind::Dg1 => 1,
            Kind::Rt1 => 2,
            Kind::Dg0 => 0,
        }
    }

    fn kind(&self) -> Kind {
        match (self.family, self.degree, self.form_order) {
            (Family::Trimmed, 1, FormOrder::Flux) => Kind::Rt0,
            (Family::Trimmed, 2, FormOrder::Flux) => Kind::Rt1,
            (Family::Full, 1, FormOrder::Flux) => Kind::Bdm1,
            (Family::Full, 0, FormOrder::Density) => Kind::Dg0,
            (Family::Full, 1, FormOrder::Density) => Kind::Dg1,
            _ => unreachable!("constructed through ElementFamily::new"),
        }
    }

    fn edge_moments(&self) -> usize {
        match self.kind() {
            Kind::Rt0 => 1,
            Kind::Bdm1 | Kind::Rt1 => 2,
            Kind::Dg0 | Kind::Dg1 => 0,
        }
    }

    fn interior_dofs(&self) -> usize {
        match self.kind() {
            Kind::Rt1 => 2,
            Kind::Dg0 => 1,
            Kind::Dg1 => 3,
            Kind::Rt0 | Kind::Bdm1 => 0,
        }
    }
}

impl fmt::Display for ElementFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind() {
            Kind::Rt0 => "RT0",
            Kind::Bdm1 => "BDM1",
            Kind::Rt1 => "RT1",
            Kind::Dg0 => "DG0",
            Kind::Dg1 => "DG1",
        };
        f.write_str(name)
    }
}

/// Monomials 1, x, y, x², xy, y².
const MONOMIALS: usize = 6;

fn monomials(p: Point) -> [f64; MONOMIALS] {
    let [x, y] = p;
    [1.0, x, y, x * x, x * y, y * y]
}

/// d/dx and d/dy of the monomials, as monomial coefficient vectors.
fn monomial_gradients(p: Point) -> ([f64; MONOMIALS], [f64; MONOMIALS]) {
    let [x, y] = p;
    ([0.0, 1.0, 0.0, 2.0 * x, y, 0.0], [0.0, 0.0, 1.0, 0.0, x, 2.0 * y])
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct VectorPoly([[f64; MONOMIALS]; 2]);

impl VectorPoly {
    fn unit(component: usize, monomial: usize) -> Self {
        let mut c = [[0.0; MONOMIALS]; 2];
        c[component][monomial] = 1.0;
        Self(c)
    }

    fn eval(&self, p: Point) -> Point {
        let m = monomials(p);
        [dot6(&self.0[0], &m), dot6(&self.0[1], &m)]
    }

    fn div(&self, p: Point) -> f64 {
        let (dx, dy) = monomial_gradients(p);
        dot6(&self.0[0], &dx) + dot6(&self.0[1], &dy)
    }
}

fn dot6(a: &[f64; MONOMIALS], b: &[f64; MONOMIALS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Local description of a degree of freedom on the reference triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalDof {
    /// ∫_e φ·n q_order ds over local edge `edge`.
    EdgeMoment { edge: usize, order: usize },
    /// ∫_T φ_component dx on the reference triangle.
    InteriorMoment { component: usize },
    /// Coefficient of the barycentric (or constant) density basis.
    Cell { index: usize },
}

/// Global description of a degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DofFunctional {
    EdgeMoment { edge: usize, order: usize },
    InteriorMoment { triangle: usize, component: usize },
    Cell { triangle: usize, index: usize },
}

const REFERENCE_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn edge_weight(order: usize, s: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => 2.0 * s - 1.0,
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone)]
enum ReferenceBasis {
    Vector(Vec<VectorPoly>),
    Scalar(Vec<[f64; MONOMIALS]>),
}

/// Reference-triangle basis dual to the local DOFs.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    element: ElementFamily,
    dofs: Vec<LocalDof>,
    basis: ReferenceBasis,
    /// Reference mass matrix of a scalar basis (identity-sized for flux).
    scalar_mass_inverse: Option<DMatrix<f64>>,
}

impl ReferenceElement {
    pub fn new(element: ElementFamily) -> Self {
        let mut dofs = Vec::new();
        for edge in 0..3 {
            for order in 0..element.edge_moments() {
                dofs.push(LocalDof::EdgeMoment { edge, order });
            }
        }
        match element.form_order {
            FormOrder::Flux => {
                for component in 0..element.interior_dofs() {
                    dofs.push(LocalDof::InteriorMoment { component });
                }
                let span = flux_spanning_set(element.kind());
                let n = span.len();
                assert_eq!(n, dofs.len());
                let mut v = DMatrix::zeros(n, n);
                for (i, dof) in dofs.iter().enumerate() {
                    for (j, p) in span.iter().enumerate() {
                        v[(i, j)] = apply_reference_dof(dof, &|x| p.eval(x));
                    }
                }
                let c = v.try_inverse().expect("unisolvent DOFs");
                let basis = (0..n)
                    .map(|k| {
                        let mut coeffs = [[0.0; MONOMIALS]; 2];
                        for (j, p) in span.iter().enumerate() {
                            for comp in 0..2 {
                                for m in 0..MONOMIALS {
                                    coeffs[comp][m] += c[(j, k)] * p.0[comp][m];
                                }
                            }
                        }
                        VectorPoly(coeffs)
                    })
                    .collect();
                Self { element, dofs, basis: ReferenceBasis::Vector(basis), scalar_mass_inverse: None }
            }
            FormOrder::Density => {
                let basis: Vec<[f64; MONOMIALS]> = match element.kind() {
                    Kind::Dg0 => vec![[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
                    Kind::Dg1 => vec![
                        [1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                    ],
                    _ => unreachable!(),
                };
                for index in 0..basis.len() {
                    dofs.push(LocalDof::Cell { index });
                }
                let rule = TriangleRule::with_degree(2);
                let n = basis.len();
                let mut mass = DMatrix::zeros(n, n);
                for (p, w) in rule.iter() {
                    let m = monomials(p);
                    for i in 0..n {
                        for j in 0..n {
                            mass[(i, j)] += w * dot6(&basis[i], &m) * dot6(&basis[j], &m);
                        }
                    }
                }
                let inv = mass.try_inverse().expect("reference mass is invertible");
                Self {
                    element,
                    dofs,
                    basis: ReferenceBasis::Scalar(basis),
                    scalar_mass_inverse: Some(inv),
                }
            }
        }
    }

    pub fn element(&self) -> ElementFamily {
        self.element
    }

    pub fn dofs(&self) -> &[LocalDof] {
        &self.dofs
    }

    pub fn dimension(&self) -> usize {
        self.dofs.len()
    }

    /// Reference values and divergences of flux basis functions.
    pub(crate) fn tabulate_vector(&self, xi: Point, values: &mut [Point], divs: &mut [f64]) {
        let ReferenceBasis::Vector(basis) = &self.basis else {
            panic!("tabulate_vector on a density element")
        };
        for (k, p) in basis.iter().enumerate() {
            values[k] = p.eval(xi);
            divs[k] = p.div(xi);
        }
    }

    pub(crate) fn tabulate_scalar(&self, xi: Point, values: &mut [f64]) {
        let ReferenceBasis::Scalar(basis) = &self.basis else {
            panic!("tabulate_scalar on a flux element")
        };
        let m = monomials(xi);
        for (k, p) in basis.iter().enumerate() {
            values[k] = dot6(p, &m);
        }
    }

    /// Applies every local DOF functional to every local basis function.
    /// Equals the identity for a correctly dualized basis.
    pub fn dof_matrix(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let mut out = DMatrix::zeros(n, n);
        match &self.basis {
            ReferenceBasis::Vector(basis) => {
                for (i, dof) in self.dofs.iter().enumerate() {
                    for (j, p) in basis.iter().enumerate() {
                        out[(i, j)] = apply_reference_dof(dof, &|x| p.eval(x));
                    }
                }
            }
            ReferenceBasis::Scalar(basis) => {
                for j in 0..n {
                    let coeffs = self.scalar_dofs(&|x| dot6(&basis[j], &monomials(x)));
                    for i in 0..n {
                        out[(i, j)] = coeffs[i];
                    }
                }
            }
        }
        out
    }

    /// Local L² projection coefficients of a reference-coordinate scalar.
    fn scalar_dofs(&self, w: &dyn Fn(Point) -> f64) -> Vec<f64> {
        let ReferenceBasis::Scalar(basis) = &self.basis else { unreachable!() };
        let minv = self.scalar_mass_inverse.as_ref().expect("density element");
        let n = basis.len();
        let mut moments = vec![0.0; n];
        for (p, wt) in interpolation_rule().iter() {
            let m = monomials(p);
            let value = w(p);
            for k in 0..n {
                moments[k] += wt * value * dot6(&basis[k], &m);
            }
        }
        (0..n).map(|i| (0..n).map(|j| minv[(i, j)] * moments[j]).sum()).collect()
    }
}

fn flux_spanning_set(kind: Kind) -> Vec<VectorPoly> {
    let bdm1 = || {
        vec![
            VectorPoly::unit(0, 0),
            VectorPoly::unit(0, 1),
            VectorPoly::unit(0, 2),
            VectorPoly::unit(1, 0),
            VectorPoly::unit(1, 1),
            VectorPoly::unit(1, 2),
        ]
    };
    match kind {
        // P0² ⊕ x·P0
        Kind::Rt0 => {
            let mut radial = [[0.0; MONOMIALS]; 2];
            radial[0][1] = 1.0;
            radial[1][2] = 1.0;
            vec![VectorPoly::unit(0, 0), VectorPoly::unit(1, 0), VectorPoly(radial)]
        }
        Kind::Bdm1 => bdm1(),
        // P1² ⊕ x·H1 with H1 = span{x, y}
        Kind::Rt1 => {
            let mut span = bdm1();
            let mut xx = [[0.0; MONOMIALS]; 2];
            xx[0][3] = 1.0; // x·x
            xx[1][4] = 1.0; // y·x
            let mut xy = [[0.0; MONOMIALS]; 2];
            xy[0][4] = 1.0; // x·y
            xy[1][5] = 1.0; // y·y
            span.push(VectorPoly(xx));
            span.push(VectorPoly(xy));
            span
        }
        Kind::Dg0 | Kind::Dg1 => unreachable!(),
    }
}

fn edge_rule() -> LineRule {
    LineRule::gauss_legendre(8)
}

fn interpolation_rule() -> TriangleRule {
    TriangleRule::with_degree(10)
}

/// Applies a flux DOF to a reference-coordinate vector field.
fn apply_reference_dof(dof: &LocalDof, w: &dyn Fn(Point) -> Point) -> f64 {
    match *dof {
        LocalDof::EdgeMoment { edge, order } => {
            let [a, b] = LOCAL_EDGES[edge].map(|v| REFERENCE_VERTICES[v]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            let rule = edge_rule();
            let mut acc = 0.0;
            for (&s, &wt) in rule.points.iter().zip(&rule.weights) {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let v = w(x);
                acc += wt * (v[0] * normal[0] + v[1] * normal[1]) * edge_weight(order, s);
            }
            acc * len
        }
        LocalDof::InteriorMoment { component } => {
            interpolation_rule().iter().map(|(p, wt)| wt * w(p)[component]).sum()
        }
        LocalDof::Cell { .. } => unreachable!("density DOFs are applied through scalar_dofs"),
    }
}

/// Value of one basis function at a point, in physical space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisValue {
    Vector { value: Point, div: f64 },
    Scalar { value: f64 },
}

impl BasisValue {
    /// Exterior derivative; zero for top-degree forms.
    pub fn div(&self) -> f64 {
        match *self {
            BasisValue::Vector { div, .. } => div,
            BasisValue::Scalar { .. } => 0.0,
        }
    }
}

/// A concrete space Λ^k_h on a mesh.
#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Arc<SimplicialMesh>,
    reference: Arc<ReferenceElement>,
    geometry: Vec<TriangleGeometry>,
    dof_count: usize,
    local_dim: usize,
    dof_indices: Vec<usize>,
    dof_signs: Vec<f64>,
    functionals: Vec<DofFunctional>,
}

impl FESpace {
    pub fn new(mesh: Arc<SimplicialMesh>, element: ElementFamily) -> Result<Self, ElementError> {
        let element = ElementFamily::new(element.family, element.degree, element.form_order)?;
        let reference = Arc::new(ReferenceElement::new(element));
        let local_dim = reference.dimension();
        let nt = mesh.num_triangles();
        let ne = mesh.num_edges();
        let em = element.edge_moments();
        let ni = element.interior_dofs();
        let dof_count = em * ne + ni * nt;

        let mut functionals = Vec::with_capacity(dof_count);
        for edge in 0..ne {
            for order in 0..em {
                functionals.push(DofFunctional::EdgeMoment { edge, order });
            }
        }
        for triangle in 0..nt {
            for k in 0..ni {
                functionals.push(match element.form_order {
                    FormOrder::Flux => DofFunctional::InteriorMoment { triangle, component: k },
                    FormOrder::Density => DofFunctional::Cell { triangle, index: k },
                });
            }
        }

        let mut dof_indices = Vec::with_capacity(nt * local_dim);
        let mut dof_signs = Vec::with_capacity(nt * local_dim);
        for t in 0..nt {
            let edges = mesh.triangle_edges(t);
            let signs = mesh.incidence(t);
            for dof in reference.dofs() {
                let (g, s) = match *dof {
                    LocalDof::EdgeMoment { edge, order } => {
                        let sign = if order % 2 == 0 { signs[edge] } else { 1.0 };
                        (em * edges[edge] + order, sign)
                    }
                    LocalDof::InteriorMoment { component } => (em * ne + ni * t + component, 1.0),
                    LocalDof::Cell { index } => (ni * t + index, 1.0),
                };
                dof_indices.push(g);
                dof_signs.push(s);
            }
        }

        let geometry = (0..nt).map(|t| mesh.triangle_geometry(t)).collect();
        Ok(Self {
            mesh,
            reference,
            geometry,
            dof_count,
            local_dim,
            dof_indices,
            dof_signs,
            functionals,
        })
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn element(&self) -> ElementFamily {
        self.reference.element()
    }

    pub fn form_order(&self) -> FormOrder {
        self.element().form_order
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn local_dimension(&self) -> usize {
        self.local_dim
    }

    pub fn geometry(&self, t: usize) -> &TriangleGeometry {
        &self.geometry[t]
    }

    /// (global index, sign) of each local DOF of triangle `t`.
    pub fn local_dofs(&self, t: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = t * self.local_dim..(t + 1) * self.local_dim;
        self.dof_indices[range.clone()].iter().copied().zip(self.dof_signs[range].iter().copied())
    }

    pub(crate) fn local_indices(&self, t: usize) -> &[usize] {
        &self.dof_indices[t * self.local_dim..(t + 1) * self.local_dim]
    }

    pub(crate) fn local_signs(&self, t: usize) -> &[f64] {
        &self.dof_signs[t * self.local_dim..(t + 1) * self.local_dim]
    }

    pub fn dof_functionals(&self) -> &[DofFunctional] {
        &self.functionals
    }

    /// Physical values (contravariant Piola for fluxes, value-preserving for
    /// densities) of the local basis of `t` at reference point `xi`.
    pub fn eval_basis(&self, t: usize, xi: Point) -> Result<Vec<BasisValue>, ElementError> {
        check_reference_point(xi)?;
        let n = self.local_dim;
        let g = &self.geometry[t];
        let signs = self.local_signs(t);
        match self.form_order() {
            FormOrder::Flux => {
                let mut vals = vec![[0.0; 2]; n];
                let mut divs = vec![0.0; n];
                self.reference.tabulate_vector(xi, &mut vals, &mut divs);
                Ok((0..n)
                    .map(|k| {
                        let v = g.piola(vals[k]);
                        BasisValue::Vector {
                            value: [signs[k] * v[0], signs[k] * v[1]],
                            div: signs[k] * divs[k] / g.det,
                        }
                    })
                    .collect())
            }
            FormOrder::Density => {
                let mut vals = vec![0.0; n];
                self.reference.tabulate_scalar(xi, &mut vals);
                Ok(vals.into_iter().map(|value| BasisValue::Scalar { value }).collect())
            }
        }
    }

    /// Value and divergence of a flux field given by `coeffs`.
    pub fn eval_vector(&self, coeffs: &[f64], t: usize, xi: Point) -> Result<(Point, f64), ElementError> {
        self.expect_form(FormOrder::Flux)?;
        self.check_len(coeffs)?;
        let basis = self.eval_basis(t, xi)?;
        let mut value = [0.0; 2];
        let mut div = 0.0;
        for (b, g) in basis.iter().zip(self.local_indices(t)) {
            if let BasisValue::Vector { value: v, div: d } = b {
                value[0] += coeffs[*g] * v[0];
                value[1] += coeffs[*g] * v[1];
                div += coeffs[*g] * d;
            }
        }
        Ok((value, div))
    }

    pub fn eval_scalar(&self, coeffs: &[f64], t: usize, xi: Point) -> Result<f64, ElementError> {
        self.expect_form(FormOrder::Density)?;
        self.check_len(coeffs)?;
        let basis = self.eval_basis(t, xi)?;
        Ok(basis
            .iter()
            .zip(self.local_indices(t))
            .map(|(b, g)| match b {
                BasisValue::Scalar { value } => coeffs[*g] * value,
                BasisValue::Vector { .. } => unreachable!(),
            })
            .sum())
    }

    /// Canonical (DOF) interpolation of a field given triangle by triangle:
    /// `w(t, x)` is the restriction to triangle `t` at physical point `x`.
    /// Edge moments are taken from the first triangle that owns the edge,
    /// which only matters for fields whose normal trace jumps.
    pub fn interpolate_vector_piecewise(
        &self,
        w: impl Fn(usize, Point) -> Point,
    ) -> Result<Vec<f64>, ElementError> {
        self.expect_form(FormOrder::Flux)?;
        let mut coeffs = vec![0.0; self.dof_count];
        let mut assigned = vec![false; self.dof_count];
        for t in 0..self.mesh.num_triangles() {
            let g = &self.geometry[t];
            let pulled = |xi: Point| g.piola_inverse(w(t, g.map(xi)));
            for (dof, (&gi, &s)) in self
                .reference
                .dofs()
                .iter()
                .zip(self.local_indices(t).iter().zip(self.local_signs(t)))
            {
                if assigned[gi] {
                    continue;
                }
                coeffs[gi] = s * apply_reference_dof(dof, &pulled);
                assigned[gi] = true;
            }
        }
        Ok(coeffs)
    }

    /// Canonical interpolation of a continuous vector field.
    pub fn canonical_interpolation(&self, w: impl Fn(Point) -> Point) -> Result<Vec<f64>, ElementError> {
        self.interpolate_vector_piecewise(|_, x| w(x))
    }

    /// Canonical projection onto a density space, i.e. the elementwise L²
    /// projection (moments against the local polynomials).
    pub fn interpolate_scalar_piecewise(&self, w: impl Fn(usize, Point) -> f64) -> Result<Vec<f64>, ElementError> {
        self.expect_form(FormOrder::Density)?;
        let mut coeffs = vec![0.0; self.dof_count];
        for t in 0..self.mesh.num_triangles() {
            let g = &self.geometry[t];
            let local = self.reference.scalar_dofs(&|xi| w(t, g.map(xi)));
            for (&gi, c) in self.local_indices(t).iter().zip(local) {
                coeffs[gi] = c;
            }
        }
        Ok(coeffs)
    }

    pub fn canonical_interpolation_scalar(&self, w: impl Fn(Point) -> f64) -> Result<Vec<f64>, ElementError> {
        self.interpolate_scalar_piecewise(|_, x| w(x))
    }

    /// Global L² projection of a vector field onto a flux space.
    pub fn l2_projection(&self, w: impl Fn(Point) -> Point) -> Result<Vec<f64>, ElementError> {
        self.expect_form(FormOrder::Flux)?;
        let rule = interpolation_rule();
        let n = self.local_dim;
        let mut rhs = vec![0.0; self.dof_count];
        let mut vals = vec![[0.0; 2]; n];
        let mut divs = vec![0.0; n];
        for t in 0..self.mesh.num_triangles() {
            let g = &self.geometry[t];
            for (xi, wt) in rule.iter() {
                self.reference.tabulate_vector(xi, &mut vals, &mut divs);
                let f = w(g.map(xi));
                let jw = wt * g.det;
                for k in 0..n {
                    let phi = g.piola(vals[k]);
                    let s = self.local_signs(t)[k];
                    rhs[self.local_indices(t)[k]] += jw * s * (f[0] * phi[0] + f[1] * phi[1]);
                }
            }
        }
        let mass = assembly::assemble_mass(self);
        if rhs.iter().all(|&x| x == 0.0) {
            return Ok(rhs);
        }
        Ok(SpdFactor::new(&mass)?.solve(&rhs))
    }

    /// L² projection onto a density space; elementwise, hence identical to
    /// the canonical projection.
    pub fn l2_projection_scalar(&self, w: impl Fn(Point) -> f64) -> Result<Vec<f64>, ElementError> {
        self.canonical_interpolation_scalar(w)
    }

    fn expect_form(&self, expected: FormOrder) -> Result<(), ElementError> {
        let got = self.form_order();
        if got == expected {
            Ok(())
        } else {
            Err(ElementError::WrongFormOrder { expected, got })
        }
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<(), ElementError> {
        if coeffs.len() == self.dof_count {
            Ok(())
        } else {
            Err(ElementError::DimensionMismatch { expected: self.dof_count, got: coeffs.len() })
        }
    }
}

fn check_reference_point(xi: Point) -> Result<(), ElementError> {
    let tol = 1e-12;
    if xi[0] < -tol || xi[1] < -tol || xi[0] + xi[1] > 1.0 + tol || !xi[0].is_finite() || !xi[1].is_finite() {
        Err(ElementError::OutsideReference(xi[0], xi[1]))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(level: usize) -> Arc<SimplicialMesh> {
        Arc::new(SimplicialMesh::unit_square_refined(level))
    }

    #[test]
    fn admissible_combinations() {
        assert!(ElementFamily::new(Family::Trimmed, 1, FormOrder::Flux).is_ok());
        assert!(ElementFamily::new(Family::Full, 1, FormOrder::Flux).is_ok());
        assert!(ElementFamily::new(Family::Trimmed, 2, FormOrder::Flux).is_ok());
        assert_eq!(ElementFamily::new(Family::Trimmed, 1, FormOrder::Density).unwrap(), ElementFamily::DG0);
        assert_eq!(ElementFamily::new(Family::Trimmed, 2, FormOrder::Density).unwrap(), ElementFamily::DG1);
        for bad in [
            (Family::Full, 0, FormOrder::Flux),
            (Family::Full, 2, FormOrder::Flux),
            (Family::Trimmed, 3, FormOrder::Flux),
            (Family::Trimmed, 0, FormOrder::Density),
            (Family::Full, 2, FormOrder::Density),
        ] {
            assert!(ElementFamily::new(bad.0, bad.1, bad.2).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn local_dimensions_interleave() {
        // dim P_r Λ¹ < dim P⁻_{r+1} Λ¹ < dim P_{r+1} Λ¹ for r = 0 (0 < 3 < 6)
        // and r = 1 (6 < 8 < 12, BDM2 counted from 2·dim P_2).
        assert!(ElementFamily::RT0.local_dimension() < ElementFamily::BDM1.local_dimension());
        assert!(ElementFamily::BDM1.local_dimension() < ElementFamily::RT1.local_dimension());
        assert!(ElementFamily::RT1.local_dimension() < 12);
        assert!(ElementFamily::DG0.local_dimension() < ElementFamily::DG1.local_dimension());
    }

    #[test]
    fn dof_counts_on_unit_square() {
        let m = square(0);
        assert_eq!(FESpace::new(m.clone(), ElementFamily::RT0).unwrap().dof_count(), 5);
        assert_eq!(FESpace::new(m.clone(), ElementFamily::DG0).unwrap().dof_count(), 2);
        assert_eq!(FESpace::new(m.clone(), ElementFamily::BDM1).unwrap().dof_count(), 10);
        assert_eq!(FESpace::new(m.clone(), ElementFamily::DG1).unwrap().dof_count(), 6);
        assert_eq!(FESpace::new(m, ElementFamily::RT1).unwrap().dof_count(), 2 * 5 + 2 * 2);
    }

    #[test]
    fn reference_dof_matrices_are_identity() {
        for e in [ElementFamily::RT0, ElementFamily::BDM1, ElementFamily::RT1, ElementFamily::DG0, ElementFamily::DG1] {
            let r = ReferenceElement::new(e);
            let m = r.dof_matrix();
            let err = (m - DMatrix::identity(r.dimension(), r.dimension())).abs().max();
            assert!(err < 1e-13, "{e}: {err:e}");
        }
    }

    #[test]
    fn rt0_divergence_is_constant() {
        let m = square(1);
        let s = FESpace::new(m, ElementFamily::RT0).unwrap();
        for t in 0..4 {
            let a = s.eval_basis(t, [0.1, 0.2]).unwrap();
            let b = s.eval_basis(t, [0.6, 0.3]).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.div() - y.div()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn points_outside_reference_are_rejected() {
        let s = FESpace::new(square(0), ElementFamily::RT0).unwrap();
        assert!(matches!(s.eval_basis(0, [0.7, 0.7]), Err(ElementError::OutsideReference(..))));
        assert!(s.eval_basis(0, [-0.1, 0.2]).is_err());
        assert!(s.eval_basis(0, [1.0, 0.0]).is_ok());
    }

    #[test]
    fn interpolation_reproduces_constants() {
        let s = FESpace::new(square(2), ElementFamily::RT0).unwrap();
        let c = s.canonical_interpolation(|_| [1.0, 0.0]).unwrap();
        for t in 0..s.mesh().num_triangles() {
            let (v, d) = s.eval_vector(&c, t, [0.3, 0.3]).unwrap();
            assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13 && d.abs() < 1e-12);
        }
    }

    #[test]
    fn l2_projection_of_zero_and_members() {
        let s = FESpace::new(square(1), ElementFamily::BDM1).unwrap();
        assert!(s.l2_projection(|_| [0.0, 0.0]).unwrap().iter().all(|&c| c == 0.0));
        let q = FESpace::new(square(1), ElementFamily::DG1).unwrap();
        let c = q.l2_projection_scalar(|x| 1.0 + 2.0 * x[0] - x[1]).unwrap();
        for t in 0..q.mesh().num_triangles() {
            let g = q.geometry(t);
            let x = g.map([0.2, 0.5]);
            let v = q.eval_scalar(&c, t, [0.2, 0.5]).unwrap();
            assert!((v - (1.0 + 2.0 * x[0] - x[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_form_order_is_reported() {
        let s = FESpace::new(square(0), ElementFamily::DG0).unwrap();
        assert!(matches!(
            s.canonical_interpolation(|_| [0.0, 0.0]),
            Err(ElementError::WrongFormOrder { .. })
        ));
    }
}
