//! Thin helpers around `sprs` for the sparse kernels used by assembly and
//! the time steppers.

use sprs::{CsMat, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};
use thiserror::Error;

pub type SparseMatrix = CsMat<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("factorization failed: {0}")]
    Singular(String),
}

/// Sparse LDLᵀ factorization (reverse Cuthill-McKee ordering) that is only
/// accepted when every pivot is positive, i.e. the matrix is SPD.
#[derive(Debug)]
pub struct SpdFactor {
    ldl: LdlNumeric<f64, usize>,
    size: usize,
}

impl SpdFactor {
    pub fn new(mat: &SparseMatrix) -> Result<Self, FactorError> {
        if mat.rows() != mat.cols() {
            return Err(FactorError::NotSquare { rows: mat.rows(), cols: mat.cols() });
        }
        let csc = mat.to_csc();
        let ldl = Ldl::new()
            .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee)
            .numeric(csc.view())
            .map_err(|e| FactorError::Singular(e.to_string()))?;
        if let Some((index, &pivot)) = ldl
            .d()
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0) || !d.is_finite())
        {
            return Err(FactorError::NotPositiveDefinite { index, pivot });
        }
        Ok(Self { ldl, size: mat.rows() })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.size);
        self.ldl.solve(rhs.to_vec())
    }
}

/// Accumulates element contributions in insertion order; duplicate entries
/// are summed in that order when converting, so identical insertion
/// sequences give bit-identical matrices.
pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
    let mut tri = TriMat::with_capacity((rows, cols), triplets.len());
    for &(i, j, v) in triplets {
        tri.add_triplet(i, j, v);
    }
    tri.to_csr()
}

pub fn matvec(m: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.cols(), x.len());
    let mut y = vec![0.0; m.rows()];
    for (i, row) in m.outer_iterator().enumerate() {
        let mut acc = 0.0;
        for (j, &v) in row.iter() {
            acc += v * x[j];
        }
        y[i] = acc;
    }
    y
}

/// `mᵀ x` without materializing the transpose.
pub fn matvec_transpose(m: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.rows(), x.len());
    let mut y = vec![0.0; m.cols()];
    for (i, row) in m.outer_iterator().enumerate() {
        let xi = x[i];
        for (j, &v) in row.iter() {
            y[j] += v * xi;
        }
    }
    y
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sqrt(xᵀ M x)`.
pub fn energy_norm(m: &SparseMatrix, x: &[f64]) -> f64 {
    dot(x, &matvec(m, x)).max(0.0).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &SparseMatrix) -> f64 {
    let t = m.transpose_view().to_csr();
    let mut worst: f64 = 0.0;
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            let w = t.get(i, j).copied().unwrap_or(0.0);
            worst = worst.max((v - w).abs());
        }
    }
    for (i, row) in t.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            if m.get(i, j).is_none() {
                worst = worst.max(v.abs());
            }
        }
    }
    worst
}
