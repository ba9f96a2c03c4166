//! Sparse matrices of the mixed semi-discrete systems
//!
//! ```text
//!   A U' - B Σ = F        A: density mass, D: flux mass,
//!   Bᵀ U + D Σ = 0        B_ij = (div ω_j, φ_i)
//! ```
//!
//! Element matrices are computed in parallel and scattered sequentially in
//! triangle order, so repeated assembly is bit-identical.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::elements::{ElementFamily, FESpace, FormOrder};
use crate::linalg::{self, SparseMatrix};
use crate::mesh::Point;
use crate::quadrature::TriangleRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("expected a flux space first and a density space second, got {flux} and {density}")]
    FormOrderMismatch { flux: ElementFamily, density: ElementFamily },
    #[error("div {flux} is not contained in {density}")]
    IncompatiblePair { flux: ElementFamily, density: ElementFamily },
}

/// Default quadrature degree for load vectors. Loads are reassembled at
/// every time step, and for smooth data the rule's error is far below the
/// discretization error of any supported pair.
pub const LOAD_QUADRATURE_DEGREE: usize = 8;

fn mass_rule(space: &FESpace) -> TriangleRule {
    TriangleRule::with_degree(2 * space.element().polynomial_degree() + 2)
}

/// Local mass matrix of triangle `t` (signs applied).
pub fn local_mass(space: &FESpace, t: usize, rule: &TriangleRule) -> DMatrix<f64> {
    let n = space.local_dimension();
    let g = space.geometry(t);
    let signs = space.local_signs(t);
    let mut m = DMatrix::zeros(n, n);
    match space.form_order() {
        FormOrder::Flux => {
            let mut vals = vec![[0.0; 2]; n];
            let mut divs = vec![0.0; n];
            let mut phys = vec![[0.0; 2]; n];
            for (xi, w) in rule.iter() {
                space.reference().tabulate_vector(xi, &mut vals, &mut divs);
                for k in 0..n {
                    let v = g.piola(vals[k]);
                    phys[k] = [signs[k] * v[0], signs[k] * v[1]];
                }
                let jw = w * g.det;
                for i in 0..n {
                    for j in 0..=i {
                        m[(i, j)] += jw * (phys[i][0] * phys[j][0] + phys[i][1] * phys[j][1]);
                    }
                }
            }
        }
        FormOrder::Density => {
            let mut vals = vec![0.0; n];
            for (xi, w) in rule.iter() {
                space.reference().tabulate_scalar(xi, &mut vals);
                let jw = w * g.det;
                for i in 0..n {
                    for j in 0..=i {
                        m[(i, j)] += jw * vals[i] * vals[j];
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    m
}

pub fn assemble_mass(space: &FESpace) -> SparseMatrix {
    let rule = mass_rule(space);
    let nt = space.mesh().num_triangles();
    let locals: Vec<DMatrix<f64>> = (0..nt).into_par_iter().map(|t| local_mass(space, t, &rule)).collect();
    let n = space.local_dimension();
    let mut triplets = Vec::with_capacity(nt * n * n);
    for (t, m) in locals.iter().enumerate() {
        let idx = space.local_indices(t);
        for i in 0..n {
            for j in 0..n {
                triplets.push((idx[i], idx[j], m[(i, j)]));
            }
        }
    }
    linalg::from_triplets(space.dof_count(), space.dof_count(), &triplets)
}

/// Local `(div ω_j, φ_i)` block of triangle `t`, density rows × flux columns.
pub fn local_divergence(flux: &FESpace, density: &FESpace, t: usize, rule: &TriangleRule) -> DMatrix<f64> {
    let nf = flux.local_dimension();
    let nd = density.local_dimension();
    let signs = flux.local_signs(t);
    let mut vals = vec![[0.0; 2]; nf];
    let mut divs = vec![0.0; nf];
    let mut phi = vec![0.0; nd];
    let mut b = DMatrix::zeros(nd, nf);
    for (xi, w) in rule.iter() {
        flux.reference().tabulate_vector(xi, &mut vals, &mut divs);
        density.reference().tabulate_scalar(xi, &mut phi);
        // div of the Piola image is div_ref / det; the Jacobian cancels it.
        for i in 0..nd {
            for j in 0..nf {
                b[(i, j)] += w * signs[j] * divs[j] * phi[i];
            }
        }
    }
    b
}

/// The assembled symbols of the mixed system.
#[derive(Debug, Clone)]
pub struct MixedOperator {
    flux: FESpace,
    density: FESpace,
    a: SparseMatrix,
    d: SparseMatrix,
    b: SparseMatrix,
    a_inv: SparseMatrix,
}

impl MixedOperator {
    pub fn assemble(flux: FESpace, density: FESpace) -> Result<Self, AssemblyError> {
        check_pair(&flux, &density)?;
        let a = assemble_mass(&density);
        let d = assemble_mass(&flux);

        let p = flux.element().polynomial_degree() + density.element().polynomial_degree();
        let rule = TriangleRule::with_degree(p + 2);
        let nt = flux.mesh().num_triangles();
        let locals: Vec<DMatrix<f64>> = (0..nt)
            .into_par_iter()
            .map(|t| local_divergence(&flux, &density, t, &rule))
            .collect();
        let mut triplets = Vec::new();
        for (t, bl) in locals.iter().enumerate() {
            let rows = density.local_indices(t);
            let cols = flux.local_indices(t);
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    triplets.push((r, c, bl[(i, j)]));
                }
            }
        }
        let b = linalg::from_triplets(density.dof_count(), flux.dof_count(), &triplets);

        // Density DOFs are local to triangles, so A is block diagonal.
        let mrule = mass_rule(&density);
        let mut inv_triplets = Vec::new();
        for t in 0..nt {
            let m = local_mass(&density, t, &mrule);
            let inv = m.try_inverse().expect("local density mass is SPD");
            let idx = density.local_indices(t);
            for (i, &r) in idx.iter().enumerate() {
                for (j, &c) in idx.iter().enumerate() {
                    inv_triplets.push((r, c, inv[(i, j)]));
                }
            }
        }
        let a_inv = linalg::from_triplets(density.dof_count(), density.dof_count(), &inv_triplets);

        Ok(Self { flux, density, a, d, b, a_inv })
    }

    /// Density mass matrix.
    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    /// Flux mass matrix.
    pub fn d(&self) -> &SparseMatrix {
        &self.d
    }

    /// Divergence coupling, density rows × flux columns.
    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }

    /// Inverse of the block-diagonal density mass matrix.
    pub fn a_inverse(&self) -> &SparseMatrix {
        &self.a_inv
    }

    pub fn flux_space(&self) -> &FESpace {
        &self.flux
    }

    pub fn density_space(&self) -> &FESpace {
        &self.density
    }

    /// `D + c Bᵀ A⁻¹ B`, the flux Schur complement of the time-stepping
    /// systems.
    pub fn flux_schur(&self, c: f64) -> SparseMatrix {
        let bt = self.b.transpose_view().to_csr();
        let bt_ainv = &bt * &self.a_inv;
        let product = &bt_ainv * &self.b;
        let scaled = product.map(|v| c * v);
        &self.d + &scaled
    }
}

fn check_pair(flux: &FESpace, density: &FESpace) -> Result<(), AssemblyError> {
    let (f, d) = (flux.element(), density.element());
    if f.form_order() != FormOrder::Flux || d.form_order() != FormOrder::Density {
        return Err(AssemblyError::FormOrderMismatch { flux: f, density: d });
    }
    let same_mesh = Arc::ptr_eq(flux.mesh(), density.mesh())
        || (flux.mesh().triangles() == density.mesh().triangles()
            && flux.mesh().vertices() == density.mesh().vertices());
    if !same_mesh {
        return Err(AssemblyError::MeshMismatch);
    }
    if f.pairing_index() != d.pairing_index() {
        return Err(AssemblyError::IncompatiblePair { flux: f, density: d });
    }
    Ok(())
}

pub type LoadFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// Assembles `(f(·, t), φ_i)` over a density space.
#[derive(Clone)]
pub struct LoadAssembler {
    f: Arc<LoadFn>,
    space: FESpace,
    rule: TriangleRule,
}

impl std::fmt::Debug for LoadAssembler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadAssembler")
            .field("space", &self.space.element())
            .field("degree", &self.rule.degree)
            .finish()
    }
}

impl LoadAssembler {
    pub fn new(space: FESpace, f: Arc<LoadFn>) -> Self {
        Self::with_degree(space, f, LOAD_QUADRATURE_DEGREE)
    }

    pub fn with_degree(space: FESpace, f: Arc<LoadFn>, degree: usize) -> Self {
        Self { f, space, rule: TriangleRule::with_degree(degree) }
    }

    pub fn zero(space: FESpace) -> Self {
        Self::new(space, Arc::new(|_, _| 0.0))
    }

    pub fn space(&self) -> &FESpace {
        &self.space
    }

    pub fn assemble(&self, t: f64) -> Vec<f64> {
        let f = &*self.f;
        assemble_density_load(&self.space, &self.rule, |_, _, x| f(x, t))
    }
}

/// `∫ w φ_i` for a density space. `w(t, xi, x)` receives the triangle, the
/// reference point and its physical image.
pub fn assemble_density_load(
    space: &FESpace,
    rule: &TriangleRule,
    w: impl Fn(usize, Point, Point) -> f64 + Sync,
) -> Vec<f64> {
    let n = space.local_dimension();
    let nt = space.mesh().num_triangles();
    let locals: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let g = space.geometry(t);
            let mut vals = vec![0.0; n];
            let mut local = vec![0.0; n];
            for (xi, wt) in rule.iter() {
                space.reference().tabulate_scalar(xi, &mut vals);
                let jw = wt * g.det * w(t, xi, g.map(xi));
                for k in 0..n {
                    local[k] += jw * vals[k];
                }
            }
            local
        })
        .collect();
    let mut out = vec![0.0; space.dof_count()];
    for (t, local) in locals.iter().enumerate() {
        for (&gi, v) in space.local_indices(t).iter().zip(local) {
            out[gi] += v;
        }
    }
    out
}

/// Coordinate-format dump: one `row col value` line per stored entry.
pub fn write_triplets<W: Write>(m: &SparseMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "# {} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
    }
    Ok(())
}
