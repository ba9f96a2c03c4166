mod common;

use std::sync::Arc;

use common::{max_abs_diff, operator, square, to_reference};
use mixed_mol::analysis::{compute_eoc, Eoc};
use mixed_mol::expr::{Expr, Func, Program, Var};
use mixed_mol::linalg::{self, SpdFactor};
use mixed_mol::mesh::Point;
use mixed_mol::{ElementPair, FESpace, LoadAssembler, NonlinearTerm, SimplicialMesh, TriangleGeometry};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = ElementPair> {
    prop::sample::select(ElementPair::ALL.to_vec())
}

/// Random smooth expressions built from a small set of leaves and the
/// functions without domain restrictions.
fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::constant),
        Just(Expr::var(Var::X)),
        Just(Expr::var(Var::Y)),
        Just(Expr::var(Var::T)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| mixed_mol::expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| mixed_mol::expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| mixed_mol::expr::mul(a, b)),
            inner.clone().prop_map(|a| mixed_mol::expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| mixed_mol::expr::call(Func::Cos, a)),
            inner.prop_map(|a| mixed_mol::expr::call(Func::Exp, mixed_mol::expr::call(Func::Sin, a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refined_meshes_keep_their_invariants(level in 0usize..5) {
        let m = SimplicialMesh::unit_square_refined(level);
        prop_assert_eq!(m.num_triangles(), 2 * 4usize.pow(level as u32));
        prop_assert_eq!(m.num_vertices() as i64 - m.num_edges() as i64 + m.num_triangles() as i64, 1);
        prop_assert!((m.h() - 2f64.sqrt() / 2f64.powi(level as i32)).abs() < 1e-14);
        let area: f64 = (0..m.num_triangles()).map(|t| m.triangle_geometry(t).area).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
        for e in 0..m.num_edges() {
            let owners = m.edge_triangles(e);
            prop_assert_eq!(owners[1].is_none(), m.is_boundary_edge(e));
        }
    }

    #[test]
    fn piola_maps_are_inverse(
        p in prop::array::uniform3(prop::array::uniform2(-2.0..2.0f64)),
        v in prop::array::uniform2(-5.0..5.0f64),
    ) {
        let (p0, p1, p2) = (p[0], p[1], p[2]);
        let orient = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        prop_assume!(orient > 0.05);
        let g = TriangleGeometry::from_vertices(p0, p1, p2).unwrap();
        let back = g.piola_inverse(g.piola(v));
        prop_assert!((back[0] - v[0]).abs() < 1e-10 && (back[1] - v[1]).abs() < 1e-10);
        let xi = to_reference(&g, g.map([0.25, 0.5]));
        prop_assert!((xi[0] - 0.25).abs() < 1e-10 && (xi[1] - 0.5).abs() < 1e-10);
        prop_assert!((g.area - orient / 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_idempotent(pair in pair(), seed in prop::collection::vec(-1.0..1.0f64, 112)) {
        let mesh = square(1);
        let space = FESpace::new(mesh, pair.flux()).unwrap();
        let c: Vec<f64> = seed.iter().cycle().take(space.dof_count()).copied().collect();
        let field = |t: usize, x: Point| space.eval_vector(&c, t, to_reference(space.geometry(t), x)).unwrap().0;
        let again = space.interpolate_vector_piecewise(field).unwrap();
        prop_assert!(max_abs_diff(&again, &c) < 1e-12);
    }

    #[test]
    fn loads_are_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, k in 0.5..4.0f64) {
        let space = FESpace::new(square(2), ElementPair::Rt1Dg1.density()).unwrap();
        let f = move |x: Point, _t: f64| (k * x[0]).sin() * x[1];
        let g = move |x: Point, t: f64| (x[0] - x[1]).exp() + t;
        let lf = LoadAssembler::new(space.clone(), Arc::new(f)).assemble(0.2);
        let lg = LoadAssembler::new(space.clone(), Arc::new(g)).assemble(0.2);
        let both = LoadAssembler::new(space, Arc::new(move |x, t| a * f(x, t) + b * g(x, t))).assemble(0.2);
        let combo: Vec<f64> = lf.iter().zip(&lg).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(max_abs_diff(&both, &combo) < 1e-13);
    }

    #[test]
    fn schur_complement_is_spd(pair in pair(), k in 1e-4..10.0f64) {
        let op = operator(&square(2), pair);
        prop_assert!(SpdFactor::new(&op.flux_schur(k * k)).is_ok());
    }

    #[test]
    fn eoc_recovers_power_laws(e0 in 1e-6..1.0f64, p in 0.0..4.0f64, n in 2usize..6) {
        let errs: Vec<(f64, f64)> = (0..n).map(|i| (0.5f64.powi(i as i32), e0 * 0.5f64.powf(p * i as f64))).collect();
        let eoc = compute_eoc(&errs).unwrap();
        prop_assert_eq!(eoc.len(), n - 1);
        for v in eoc {
            match v {
                Eoc::Order(o) => prop_assert!((o - p).abs() < 1e-9),
                Eoc::Exact => prop_assert!(false),
            }
        }
    }

    #[test]
    fn symbolic_derivatives_match_finite_differences(e in expr(), x in 0.0..1.0f64, y in 0.0..1.0f64, t in 0.0..1.0f64) {
        let h = 1e-5;
        for (v, shift) in [(Var::X, [h, 0.0, 0.0]), (Var::Y, [0.0, h, 0.0]), (Var::T, [0.0, 0.0, h])] {
            let d = e.diff(v).eval(x, y, t);
            let fd = (e.eval(x + shift[0], y + shift[1], t + shift[2]) - e.eval(x - shift[0], y - shift[1], t - shift[2])) / (2.0 * h);
            prop_assume!(d.is_finite() && fd.is_finite() && d.abs() < 1e6);
            prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{} d/d{:?}: {} vs {}", e, v, d, fd);
        }
    }

    #[test]
    fn display_parses_back_to_the_same_values(e in expr(), x in 0.0..1.0f64, y in 0.0..1.0f64, t in 0.0..1.0f64) {
        let back = Expr::parse(&e.to_string()).unwrap();
        let (a, b) = (e.eval(x, y, t), back.eval(x, y, t));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{}: {} vs {}", e, a, b);
        let program = Program::compile(&[&e, &e.laplacian()]);
        let mut out = [0.0; 2];
        program.eval(x, y, t, &mut out);
        prop_assert!((out[0] - a).abs() <= 1e-12 * (1.0 + a.abs()));
        let lap = e.laplacian().eval(x, y, t);
        prop_assert!((out[1] - lap).abs() <= 1e-12 * (1.0 + lap.abs()));
    }

    #[test]
    fn sine_never_exceeds_its_lipschitz_bound(samples in prop::collection::vec(-10.0..10.0f64, 2..80)) {
        let sine = NonlinearTerm::sine();
        prop_assert!(sine.empirical_lipschitz(&samples) <= sine.lipschitz() + 1e-9);
    }

    #[test]
    fn discrete_divergence_of_interpolants(pair in pair(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        // divergence-free linear fields interpolate to discretely divergence-free fluxes
        let op = operator(&square(2), pair);
        let sigma = op.flux_space().canonical_interpolation(|x| [a * x[0] + b * x[1], -a * x[1]]).unwrap();
        let div = linalg::matvec(op.b(), &sigma);
        prop_assert!(linalg::norm2(&div) < 1e-12 * (1.0 + linalg::norm2(&sigma)));
    }
}
