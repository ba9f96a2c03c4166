#![allow(dead_code)]

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use mixed_mol::elements::BasisValue;
use mixed_mol::mesh::Point;
use mixed_mol::quadrature::TriangleRule;
use mixed_mol::{ElementPair, FESpace, MixedOperator, SimplicialMesh, TriangleGeometry};

pub fn square(level: usize) -> Arc<SimplicialMesh> {
    Arc::new(SimplicialMesh::unit_square_refined(level))
}

pub fn operator(mesh: &Arc<SimplicialMesh>, pair: ElementPair) -> MixedOperator {
    MixedOperator::assemble(
        FESpace::new(mesh.clone(), pair.flux()).unwrap(),
        FESpace::new(mesh.clone(), pair.density()).unwrap(),
    )
    .unwrap()
}

/// Inverse of the affine reference map.
pub fn to_reference(g: &TriangleGeometry, x: Point) -> Point {
    let j = &g.jacobian;
    let d = [x[0] - g.origin[0], x[1] - g.origin[1]];
    let xi = [(j[1][1] * d[0] - j[0][1] * d[1]) / g.det, (-j[1][0] * d[0] + j[0][0] * d[1]) / g.det];
    // clamp round-off so points on edges stay inside the closed triangle
    let clamp = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
    let (a, b) = (clamp(xi[0]), clamp(xi[1]));
    if a + b > 1.0 && a + b < 1.0 + 1e-14 {
        let s = a + b;
        [a / s, b / s]
    } else {
        [a, b]
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dense copy of a sparse matrix.
pub fn dense(m: &mixed_mol::linalg::SparseMatrix) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m.cols()]; m.rows()];
    for (v, (i, j)) in m.iter() {
        out[i][j] += *v;
    }
    out
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Uniform point of the reference triangle.
pub fn reference_point(rng: &mut StdRng) -> Point {
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    if a + b > 1.0 {
        [1.0 - a, 1.0 - b]
    } else {
        [a, b]
    }
}

/// Dense A, D and B by looping over triangles and quadrature points with
/// the globally signed basis values and a degree-10 rule.
pub fn brute_force(op: &MixedOperator) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (fs, ds) = (op.flux_space(), op.density_space());
    let (nf, nd) = (fs.dof_count(), ds.dof_count());
    let mut a = vec![vec![0.0; nd]; nd];
    let mut d = vec![vec![0.0; nf]; nf];
    let mut b = vec![vec![0.0; nf]; nd];
    let rule = TriangleRule::with_degree(10);
    let mesh = fs.mesh();
    for t in 0..mesh.num_triangles() {
        let det = fs.geometry(t).det;
        let fi: Vec<usize> = fs.local_dofs(t).map(|(g, _)| g).collect();
        let di: Vec<usize> = ds.local_dofs(t).map(|(g, _)| g).collect();
        for (xi, w) in rule.iter() {
            let fv = fs.eval_basis(t, xi).unwrap();
            let dv = ds.eval_basis(t, xi).unwrap();
            let jw = w * det;
            let vec_of = |b: &BasisValue| match *b {
                BasisValue::Vector { value, .. } => value,
                BasisValue::Scalar { .. } => unreachable!(),
            };
            let scal_of = |b: &BasisValue| match *b {
                BasisValue::Scalar { value } => value,
                BasisValue::Vector { .. } => unreachable!(),
            };
            for (p, &gp) in dv.iter().zip(&di) {
                for (q, &gq) in dv.iter().zip(&di) {
                    a[gp][gq] += jw * scal_of(p) * scal_of(q);
                }
                for (q, &gq) in fv.iter().zip(&fi) {
                    b[gp][gq] += jw * q.div() * scal_of(p);
                }
            }
            for (p, &gp) in fv.iter().zip(&fi) {
                for (q, &gq) in fv.iter().zip(&fi) {
                    let (u, v) = (vec_of(p), vec_of(q));
                    d[gp][gq] += jw * (u[0] * v[0] + u[1] * v[1]);
                }
            }
        }
    }
    (a, d, b)
}

pub fn max_matrix_diff(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    x.iter().zip(y).map(|(r, s)| max_abs_diff(r, s)).fold(0.0, f64::max)
}

/// Global basis function `j` restricted to triangle `t` at physical `x`.
pub fn basis_field(space: &FESpace, j: usize) -> impl Fn(usize, Point) -> Point + '_ {
    let mut e = vec![0.0; space.dof_count()];
    e[j] = 1.0;
    move |t, x| space.eval_vector(&e, t, to_reference(space.geometry(t), x)).unwrap().0
}

