//! Time steppers and the elliptic solve against dense block-system oracles
//! and their structural invariants.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{dense, max_abs_diff, operator, square};
use mixed_mol::assembly::LoadFn;
use mixed_mol::linalg;
use mixed_mol::mesh::Point;
use mixed_mol::solvers::{density_load, discrete_energy};
use mixed_mol::{
    ElementPair, LoadAssembler, MixedOperator, NonlinearTerm, ProblemKind, SaddleSolver, Scheme, SolverError, Trajectory,
};
use nalgebra::{DMatrix, DVector};

fn sine(x: Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn setup(level: usize, pair: ElementPair) -> (Arc<MixedOperator>, SaddleSolver) {
    let op = Arc::new(operator(&square(level), pair));
    let solver = SaddleSolver::new(op.clone());
    (op, solver)
}

fn to_dmatrix(m: &linalg::SparseMatrix) -> DMatrix<f64> {
    let d = dense(m);
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| d[i][j])
}

/// Dense LU solve of one θ-step of the mixed heat system with an extra
/// `shift·A U` on the left:
/// `A(U - U0)/dt - B(θΣ + (1-θ)Σ0) + shift·A U = F`, `BᵀU + DΣ = 0`.
fn dense_parabolic_step(op: &MixedOperator, theta: f64, shift: f64, dt: f64, u0: &[f64], s0: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (a, b, d) = (to_dmatrix(op.a()), to_dmatrix(op.b()), to_dmatrix(op.d()));
    let (nu, ns) = (a.nrows(), d.nrows());
    let mut m = DMatrix::zeros(nu + ns, nu + ns);
    m.view_mut((0, 0), (nu, nu)).copy_from(&(&a * (1.0 / dt + shift)));
    m.view_mut((0, nu), (nu, ns)).copy_from(&(&b * -theta));
    m.view_mut((nu, 0), (ns, nu)).copy_from(&b.transpose());
    m.view_mut((nu, nu), (ns, ns)).copy_from(&d);
    let mut rhs = DVector::zeros(nu + ns);
    let top = &a * DVector::from_column_slice(u0) / dt + DVector::from_column_slice(f) + &b * DVector::from_column_slice(s0) * (1.0 - theta);
    rhs.rows_mut(0, nu).copy_from(&top);
    let x = m.lu().solve(&rhs).expect("nonsingular block system");
    (x.rows(0, nu).iter().copied().collect(), x.rows(nu, ns).iter().copied().collect())
}

/// Dense LU solve of one θ-step of the velocity-stress system.
fn dense_hyperbolic_step(op: &MixedOperator, theta: f64, k: f64, mu0: &[f64], s0: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (a, b, d) = (to_dmatrix(op.a()), to_dmatrix(op.b()), to_dmatrix(op.d()));
    let (nu, ns) = (a.nrows(), d.nrows());
    let mut m = DMatrix::zeros(nu + ns, nu + ns);
    m.view_mut((0, 0), (nu, nu)).copy_from(&a);
    m.view_mut((0, nu), (nu, ns)).copy_from(&(&b * (-theta * k)));
    m.view_mut((nu, 0), (ns, nu)).copy_from(&(b.transpose() * (theta * k)));
    m.view_mut((nu, nu), (ns, ns)).copy_from(&d);
    let (mu0, s0, f) = (DVector::from_column_slice(mu0), DVector::from_column_slice(s0), DVector::from_column_slice(f));
    let mut rhs = DVector::zeros(nu + ns);
    rhs.rows_mut(0, nu).copy_from(&(&a * &mu0 + &b * &s0 * ((1.0 - theta) * k) + f * k));
    rhs.rows_mut(nu, ns).copy_from(&(&d * &s0 - b.transpose() * &mu0 * ((1.0 - theta) * k)));
    let x = m.lu().solve(&rhs).expect("nonsingular block system");
    (x.rows(0, nu).iter().copied().collect(), x.rows(nu, ns).iter().copied().collect())
}

fn forcing_load(op: &MixedOperator, f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> LoadAssembler {
    let f: Arc<LoadFn> = Arc::new(f);
    LoadAssembler::new(op.density_space().clone(), f)
}

#[test]
fn elliptic_zero_load_gives_zero() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(2, pair);
        let (u, s) = solver.solve_elliptic_mixed(&vec![0.0; op.density_space().dof_count()]).unwrap();
        assert!(u.iter().chain(&s).all(|&v| v == 0.0));
    }
}

#[test]
fn elliptic_solution_satisfies_the_block_system() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(3, pair);
        let load = density_load(&op, |x| 2.0 * PI * PI * sine(x) + x[0]);
        let (u, s) = solver.solve_elliptic_mixed(&load).unwrap();
        let mut flux_row = linalg::matvec(op.d(), &s);
        linalg::axpy(1.0, &linalg::matvec_transpose(op.b(), &u), &mut flux_row);
        let mut density_row = linalg::matvec(op.b(), &s);
        linalg::axpy(1.0, &load, &mut density_row);
        let scale = linalg::norm2(&load);
        assert!(linalg::norm2(&flux_row) < 1e-10 * scale, "{pair}");
        assert!(linalg::norm2(&density_row) < 1e-10 * scale, "{pair}");
        assert!(solver.residual_log().iter().all(|&r| r <= solver.tolerance()));
    }
}

#[test]
fn wrong_load_length_is_rejected() {
    let (_, mut solver) = setup(1, ElementPair::Rt0Dg0);
    assert!(matches!(solver.solve_elliptic_mixed(&[1.0]), Err(SolverError::DimensionMismatch { .. })));
}

#[test]
fn parabolic_steps_match_the_dense_oracle() {
    for pair in ElementPair::ALL {
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let (op, mut solver) = setup(2, pair);
            let (u0, s0) = solver.elliptic_projection(|x| -2.0 * PI * PI * sine(x)).unwrap();
            let f = |x: Point, t: f64| (1.0 + t) * x[0] * (1.0 - x[1]);
            let load = forcing_load(&op, f);
            let mut traj = Trajectory::uniform(0.3, 3, scheme, ProblemKind::Parabolic, u0, s0).unwrap();
            for i in 1..=3 {
                solver.step_parabolic(&load, &mut traj, i).unwrap();
                let (t0, t1) = (traj.times()[i - 1], traj.times()[i]);
                let (theta, fv) = match scheme {
                    Scheme::BackwardEuler => (1.0, load.assemble(t1)),
                    Scheme::CrankNicolson => {
                        let (a, b) = (load.assemble(t0), load.assemble(t1));
                        (0.5, a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
                    }
                };
                let (u, s) = dense_parabolic_step(&op, theta, 0.0, t1 - t0, traj.u(i - 1), traj.sigma(i - 1), &fv);
                assert!(max_abs_diff(traj.u(i), &u) < 1e-10 * linalg::norm2(&u).max(1.0), "{pair} {scheme} u");
                assert!(max_abs_diff(traj.sigma(i), &s) < 1e-10 * linalg::norm2(&s).max(1.0), "{pair} {scheme} sigma");
            }
        }
    }
}

#[test]
fn hyperbolic_steps_match_the_dense_oracle() {
    for pair in ElementPair::ALL {
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let (op, mut solver) = setup(2, pair);
            let mu0 = op.density_space().canonical_interpolation_scalar(|x| x[0] * x[1]).unwrap();
            let s0 = op.flux_space().canonical_interpolation(|x| [PI * (PI * x[0]).cos(), 0.0]).unwrap();
            let load = forcing_load(&op, |x, t| t * sine(x));
            let mut traj = Trajectory::uniform(0.2, 2, scheme, ProblemKind::Hyperbolic, mu0, s0).unwrap();
            for i in 1..=2 {
                solver.step_hyperbolic(&load, &mut traj, i).unwrap();
                let (t0, t1) = (traj.times()[i - 1], traj.times()[i]);
                let (theta, fv) = match scheme {
                    Scheme::BackwardEuler => (1.0, load.assemble(t1)),
                    Scheme::CrankNicolson => {
                        let (a, b) = (load.assemble(t0), load.assemble(t1));
                        (0.5, a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
                    }
                };
                let (mu, s) = dense_hyperbolic_step(&op, theta, t1 - t0, traj.u(i - 1), traj.sigma(i - 1), &fv);
                assert!(max_abs_diff(traj.u(i), &mu) < 1e-10 * linalg::norm2(&mu).max(1.0), "{pair} {scheme} mu");
                assert!(max_abs_diff(traj.sigma(i), &s) < 1e-10 * linalg::norm2(&s).max(1.0), "{pair} {scheme} sigma");
            }
        }
    }
}

#[test]
fn zero_data_stays_zero() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(2, pair);
        let (nu, ns) = (op.density_space().dof_count(), op.flux_space().dof_count());
        let load = LoadAssembler::zero(op.density_space().clone());
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let mut heat = Trajectory::uniform(0.5, 4, scheme, ProblemKind::Parabolic, vec![0.0; nu], vec![0.0; ns]).unwrap();
            let mut wave = Trajectory::uniform(0.5, 4, scheme, ProblemKind::Hyperbolic, vec![0.0; nu], vec![0.0; ns]).unwrap();
            for i in 1..=4 {
                solver.step_parabolic(&load, &mut heat, i).unwrap();
                solver.step_hyperbolic(&load, &mut wave, i).unwrap();
            }
            for i in 0..=4 {
                assert!(heat.u(i).iter().chain(heat.sigma(i)).all(|&v| v == 0.0));
                assert!(wave.u(i).iter().chain(wave.sigma(i)).all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn backward_euler_heat_is_dissipative() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(3, pair);
        let (u0, s0) = solver.elliptic_projection(|x| -2.0 * PI * PI * sine(x) - 8.0 * PI * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()).unwrap();
        let load = LoadAssembler::zero(op.density_space().clone());
        let mut traj = Trajectory::uniform(0.2, 20, Scheme::BackwardEuler, ProblemKind::Parabolic, u0, s0).unwrap();
        let mut prev = linalg::energy_norm(op.a(), traj.u(0));
        for i in 1..=20 {
            solver.step_parabolic(&load, &mut traj, i).unwrap();
            let norm = linalg::energy_norm(op.a(), traj.u(i));
            assert!(norm <= prev, "{pair} step {i}: {norm} > {prev}");
            prev = norm;
        }
    }
}

#[test]
fn crank_nicolson_wave_conserves_energy() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(3, pair);
        let mu0 = op.density_space().canonical_interpolation_scalar(|x| x[1] * sine(x)).unwrap();
        let s0 = op.flux_space().canonical_interpolation(|x| [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()]).unwrap();
        let load = LoadAssembler::zero(op.density_space().clone());
        let mut traj = Trajectory::uniform(1.0, 64, Scheme::CrankNicolson, ProblemKind::Hyperbolic, mu0, s0).unwrap();
        let e0 = discrete_energy(&op, traj.u(0), traj.sigma(0));
        for i in 1..=64 {
            solver.step_hyperbolic(&load, &mut traj, i).unwrap();
            let e = discrete_energy(&op, traj.u(i), traj.sigma(i));
            assert!(((e - e0) / e0).abs() < 1e-10, "{pair} step {i}");
        }
    }
}

#[test]
fn semilinear_with_zero_nonlinearity_is_the_linear_step() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(3, pair);
        let (u0, s0) = solver.elliptic_projection(|x| -2.0 * PI * PI * sine(x)).unwrap();
        let load = forcing_load(&op, |x, t| (-t).exp() * sine(x));
        let mut linear = Trajectory::uniform(0.25, 5, Scheme::BackwardEuler, ProblemKind::Parabolic, u0.clone(), s0.clone()).unwrap();
        let mut semi = Trajectory::uniform(0.25, 5, Scheme::BackwardEuler, ProblemKind::SemiLinear, u0, s0).unwrap();
        let zero = NonlinearTerm::zero();
        for i in 1..=5 {
            solver.step_parabolic(&load, &mut linear, i).unwrap();
            solver.step_semilinear(&load, &zero, &mut semi, i).unwrap();
            assert!(max_abs_diff(linear.u(i), semi.u(i)) <= 1e-12);
            assert!(max_abs_diff(linear.sigma(i), semi.sigma(i)) <= 1e-12);
        }
    }
}

#[test]
fn linear_nonlinearity_matches_the_shifted_oracle() {
    for pair in ElementPair::ALL {
        let (op, mut solver) = setup(2, pair);
        let (u0, s0) = solver.elliptic_projection(|x| -2.0 * PI * PI * sine(x)).unwrap();
        let load = forcing_load(&op, |x, t| (1.0 + t) * sine(x));
        let mut traj = Trajectory::uniform(0.3, 3, Scheme::BackwardEuler, ProblemKind::SemiLinear, u0, s0).unwrap();
        let shift = NonlinearTerm::linear();
        for i in 1..=3 {
            solver.step_semilinear(&load, &shift, &mut traj, i).unwrap();
            let dt = traj.times()[i] - traj.times()[i - 1];
            let f = load.assemble(traj.times()[i]);
            let (u, s) = dense_parabolic_step(&op, 1.0, 1.0, dt, traj.u(i - 1), traj.sigma(i - 1), &f);
            assert!(max_abs_diff(traj.u(i), &u) < 1e-9, "{pair} u step {i}");
            assert!(max_abs_diff(traj.sigma(i), &s) < 1e-9, "{pair} sigma step {i}");
        }
    }
}

#[test]
fn fixed_point_failure_reports_dt_times_lipschitz() {
    let (op, mut solver) = setup(2, ElementPair::Rt0Dg0);
    let (u0, s0) = solver.elliptic_projection(|x| -2.0 * PI * PI * sine(x)).unwrap();
    let load = LoadAssembler::zero(op.density_space().clone());
    let stiff = NonlinearTerm::new("stiff", 40.0, |u| 40.0 * u);
    let mut traj = Trajectory::uniform(0.5, 1, Scheme::BackwardEuler, ProblemKind::SemiLinear, u0, s0).unwrap();
    match solver.step_semilinear(&load, &stiff, &mut traj, 1) {
        Err(SolverError::FixedPoint { step, dt_lipschitz, .. }) => {
            assert_eq!(step, 1);
            assert!((dt_lipschitz - 20.0).abs() < 1e-12);
        }
        other => panic!("expected a fixed-point failure, got {other:?}"),
    }
}

#[test]
fn steps_must_follow_populated_nodes() {
    let (op, mut solver) = setup(1, ElementPair::Rt0Dg0);
    let (nu, ns) = (op.density_space().dof_count(), op.flux_space().dof_count());
    let load = LoadAssembler::zero(op.density_space().clone());
    let mut traj = Trajectory::uniform(1.0, 3, Scheme::BackwardEuler, ProblemKind::Parabolic, vec![0.0; nu], vec![0.0; ns]).unwrap();
    assert!(solver.step_parabolic(&load, &mut traj, 2).is_err());
    assert!(solver.step_parabolic(&load, &mut traj, 0).is_err());
    let mut wrong = Trajectory::uniform(1.0, 1, Scheme::BackwardEuler, ProblemKind::Parabolic, vec![0.0; nu + 1], vec![0.0; ns]).unwrap();
    assert!(solver.step_parabolic(&load, &mut wrong, 1).is_err());
}

#[test]
fn replacing_the_operator_drops_cached_factors() {
    let (op2, mut solver) = setup(2, ElementPair::Rt0Dg0);
    solver.schur_factor(0.1).unwrap();
    let op3 = Arc::new(operator(&square(3), ElementPair::Rt0Dg0));
    solver.replace_operator(op3.clone());
    let rhs = vec![1.0; op3.flux_space().dof_count()];
    let x = solver.solve_schur(0.1, &rhs).unwrap();
    let r = linalg::sub(&rhs, &linalg::matvec(&op3.flux_schur(0.1), &x));
    assert!(linalg::norm2(&r) < 1e-10 * linalg::norm2(&rhs));
    assert_ne!(op2.flux_space().dof_count(), x.len());
}

#[test]
fn empirical_lipschitz_of_the_builtins() {
    let samples = NonlinearTerm::sample_range(-3.0, 3.0, 200);
    for nl in [NonlinearTerm::zero(), NonlinearTerm::sine(), NonlinearTerm::linear()] {
        assert!(nl.empirical_lipschitz(&samples) <= nl.lipschitz() + 1e-12, "{}", nl.name());
    }
    let cubic = NonlinearTerm::new("cubic", 1.0, |u| u * u * u);
    assert!(cubic.empirical_lipschitz(&samples) > 1.0);
}
