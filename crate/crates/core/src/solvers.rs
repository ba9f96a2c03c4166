//! Linear solves and time steppers for the mixed semi-discrete systems.
//!
//! Every implicit step is reduced to the symmetric positive definite flux
//! system `(D + c BᵀA⁻¹B) Σ = G`, which is sparse because the density mass
//! `A` is block diagonal. The density unknown is then recovered from the
//! first block row. The stationary mixed problem is solved by iterating
//! the same reduction with a large pseudo time step.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{self, LoadAssembler, MixedOperator};
use crate::linalg::{self, FactorError, SparseMatrix, SpdFactor};
use crate::mesh::Point;
use crate::quadrature::TriangleRule;

/// Relative block residual every solve must meet.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Fixed-point increment (A-norm) at which a semi-linear step stops.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 50;
const ELLIPTIC_MAX_ITERATIONS: usize = 60;
const SCHUR_REFINEMENT_STEPS: usize = 1;
const PSEUDO_STEP_FACTOR: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("factorization of {what} failed: {source}")]
    Factorization {
        what: &'static str,
        #[source]
        source: FactorError,
    },
    #[error("step {step}: relative residual {relative:e} exceeds {tolerance:e}")]
    Residual { step: usize, relative: f64, tolerance: f64 },
    #[error("mixed elliptic solve stagnated at relative residual {residual:e}; the divergence has a nontrivial kernel")]
    SingularSchur { residual: f64 },
    #[error("step {step}: fixed point did not converge in {iterations} iterations (dt·C = {dt_lipschitz})")]
    FixedPoint { step: usize, iterations: usize, dt_lipschitz: f64 },
    #[error("vector of length {got} where {expected} was expected")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::CrankNicolson => "crank-nicolson",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "be" | "backward-euler" => Ok(Scheme::BackwardEuler),
            "cn" | "crank-nicolson" => Ok(Scheme::CrankNicolson),
            _ => Err(format!("unknown scheme `{s}` (expected backward-euler or crank-nicolson)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Parabolic,
    Hyperbolic,
    SemiLinear,
}

/// Time grid with the density and flux coefficients at every computed
/// node. For hyperbolic runs the density unknown is the velocity `μ = u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    u: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    scheme: Scheme,
    problem: ProblemKind,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        scheme: Scheme,
        problem: ProblemKind,
        u0: Vec<f64>,
        sigma0: Vec<f64>,
    ) -> Result<Self, SolverError> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(SolverError::Trajectory("time grid must start at 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::Trajectory("time grid must be strictly increasing".into()));
        }
        Ok(Self { times, u: vec![u0], sigma: vec![sigma0], scheme, problem })
    }

    /// `steps` equal steps on [0, final_time].
    pub fn uniform(
        final_time: f64,
        steps: usize,
        scheme: Scheme,
        problem: ProblemKind,
        u0: Vec<f64>,
        sigma0: Vec<f64>,
    ) -> Result<Self, SolverError> {
        if !(final_time > 0.0) || steps == 0 {
            return Err(SolverError::Trajectory("need T > 0 and at least one step".into()));
        }
        let mut times: Vec<f64> = (0..=steps).map(|i| final_time * i as f64 / steps as f64).collect();
        times[steps] = final_time;
        Self::new(times, scheme, problem, u0, sigma0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    /// Number of nodes that hold coefficients.
    pub fn populated(&self) -> usize {
        self.u.len()
    }

    pub fn is_complete(&self) -> bool {
        self.u.len() == self.times.len()
    }

    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[i]
    }

    pub fn sigma(&self, i: usize) -> &[f64] {
        &self.sigma[i]
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn problem(&self) -> ProblemKind {
        self.problem
    }

    fn check_step(&self, i: usize) -> Result<(), SolverError> {
        if i == 0 || i >= self.times.len() {
            return Err(SolverError::Trajectory(format!("step index {i} outside 1..{}", self.times.len())));
        }
        if self.u.len() != i {
            return Err(SolverError::Trajectory(format!(
                "step {i} needs exactly nodes 0..{} populated, have {}",
                i - 1,
                self.u.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, u: Vec<f64>, sigma: Vec<f64>) {
        self.u.push(u);
        self.sigma.push(sigma);
    }
}

/// A Lipschitz nonlinearity `F` acting pointwise on the density.
#[derive(Clone)]
pub struct NonlinearTerm {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
}

impl fmt::Debug for NonlinearTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearTerm").field("name", &self.name).field("lipschitz", &self.lipschitz).finish()
    }
}

impl NonlinearTerm {
    pub fn new(name: impl Into<String>, lipschitz: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), lipschitz }
    }

    pub fn zero() -> Self {
        Self::new("zero", 0.0, |_| 0.0)
    }

    pub fn sine() -> Self {
        Self::new("sin", 1.0, f64::sin)
    }

    /// `F(u) = u`.
    pub fn linear() -> Self {
        Self::new("linear", 1.0, |u| u)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    /// Largest difference quotient over all pairs of `samples`. Pairs closer
    /// than `1e-8` (relative) are skipped, where the quotient is round-off.
    pub fn empirical_lipschitz(&self, samples: &[f64]) -> f64 {
        let values: Vec<f64> = samples.iter().map(|&u| self.eval(u)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let d = (samples[i] - samples[j]).abs();
                if d > 1e-8 * samples[i].abs().max(samples[j].abs()).max(1.0) {
                    worst = worst.max((values[i] - values[j]).abs() / d);
                }
            }
        }
        worst
    }

    /// Evenly spaced samples of `[lo, hi]` for [`Self::empirical_lipschitz`].
    pub fn sample_range(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n < 2 || hi <= lo {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }
}

/// Owns a mixed operator and caches factorizations of its flux Schur
/// complements.
#[derive(Debug)]
pub struct SaddleSolver {
    op: Arc<MixedOperator>,
    tolerance: f64,
    pseudo_step: f64,
    schur: HashMap<u64, (SparseMatrix, SpdFactor)>,
    residual_log: Vec<f64>,
}

impl SaddleSolver {
    pub fn new(op: Arc<MixedOperator>) -> Self {
        // Each elliptic iteration multiplies the error in the slowest mode
        // (eigenvalue λ ≳ π²/diam²) by 1/(1 + τλ), about 1/40 here; a larger τ converges faster but
        // amplifies round-off in the density update.
        let diam2 = domain_diameter_squared(&op);
        Self {
            op,
            tolerance: DEFAULT_TOLERANCE,
            pseudo_step: PSEUDO_STEP_FACTOR * diam2,
            schur: HashMap::new(),
            residual_log: Vec::new(),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn operator(&self) -> &Arc<MixedOperator> {
        &self.op
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Relative block residuals of every solve so far, in order.
    pub fn residual_log(&self) -> &[f64] {
        &self.residual_log
    }

    /// Replaces the operator and drops every cached factorization.
    pub fn replace_operator(&mut self, op: Arc<MixedOperator>) {
        self.pseudo_step = PSEUDO_STEP_FACTOR * domain_diameter_squared(&op);
        self.op = op;
        self.schur.clear();
    }

    /// Factorization of `D + c BᵀA⁻¹B`, computed once per `c`.
    pub fn schur_factor(&mut self, c: f64) -> Result<&SpdFactor, SolverError> {
        let key = c.to_bits();
        if !self.schur.contains_key(&key) {
            let m = self.op.flux_schur(c);
            let f = SpdFactor::new(&m).map_err(|source| SolverError::Factorization { what: "flux Schur complement", source })?;
            self.schur.insert(key, (m, f));
        }
        Ok(&self.schur[&key].1)
    }

    /// Solves `(D + c BᵀA⁻¹B) x = rhs` with iterative refinement.
    pub fn solve_schur(&mut self, c: f64, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.schur_factor(c)?;
        let (m, f) = &self.schur[&c.to_bits()];
        let mut x = f.solve(rhs);
        for _ in 0..SCHUR_REFINEMENT_STEPS {
            let r = linalg::sub(rhs, &linalg::matvec(m, &x));
            linalg::axpy(1.0, &f.solve(&r), &mut x);
        }
        Ok(x)
    }

    fn check_step(&self, traj: &Trajectory, i: usize) -> Result<(), SolverError> {
        traj.check_step(i)?;
        self.check_len(&traj.u[i - 1], self.op.density_space().dof_count())?;
        self.check_len(&traj.sigma[i - 1], self.op.flux_space().dof_count())
    }

    fn check_len(&self, v: &[f64], expected: usize) -> Result<(), SolverError> {
        if v.len() == expected {
            Ok(())
        } else {
            Err(SolverError::DimensionMismatch { expected, got: v.len() })
        }
    }

    /// Solves `D σ + Bᵀ u = 0`, `-B σ = load`: the mixed form of `-Δu = f`
    /// with `load_i = (f, φ_i)`. Returns `(u, σ)`.
    pub fn solve_elliptic_mixed(&mut self, load: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let nu = self.op.density_space().dof_count();
        let ns = self.op.flux_space().dof_count();
        self.check_len(load, nu)?;
        let load_norm = linalg::norm2(load);
        if load_norm == 0.0 {
            self.residual_log.push(0.0);
            return Ok((vec![0.0; nu], vec![0.0; ns]));
        }
        let tau = self.pseudo_step;
        let op = self.op.clone();
        let ainv_load = linalg::matvec(op.a_inverse(), load);
        let mut u = vec![0.0; nu];
        let mut sigma = vec![0.0; ns];
        let mut best = f64::INFINITY;
        for _ in 0..ELLIPTIC_MAX_ITERATIONS {
            // (D + τ BᵀA⁻¹B) σ = -Bᵀ(u_k + τ A⁻¹ load)
            let mut w = u.clone();
            linalg::axpy(tau, &ainv_load, &mut w);
            let rhs: Vec<f64> = linalg::matvec_transpose(op.b(), &w).into_iter().map(|v| -v).collect();
            sigma = self.solve_schur(tau, &rhs)?;
            // u_{k+1} = u_k + τ A⁻¹ (load + B σ)
            let mut defect = linalg::matvec(op.b(), &sigma);
            linalg::axpy(1.0, load, &mut defect);
            let update = linalg::matvec(op.a_inverse(), &defect);
            linalg::axpy(tau, &update, &mut u);

            let relative = self.elliptic_residual(&u, &sigma, load);
            if relative <= self.tolerance {
                self.residual_log.push(relative);
                return Ok((u, sigma));
            }
            if relative > 0.5 * best && best < 1e-6 {
                // no more progress: round-off floor or a singular system
                if best <= 1e2 * self.tolerance {
                    self.residual_log.push(relative.min(best));
                    return Ok((u, sigma));
                }
                return Err(SolverError::SingularSchur { residual: best });
            }
            best = best.min(relative);
        }
        Err(SolverError::SingularSchur { residual: best })
    }

    fn elliptic_residual(&self, u: &[f64], sigma: &[f64], load: &[f64]) -> f64 {
        let op = &self.op;
        let mut res = BlockResidual::default();
        res.row(&[(1.0, &linalg::matvec(op.d(), sigma)), (1.0, &linalg::matvec_transpose(op.b(), u))]);
        res.row(&[(1.0, &linalg::matvec(op.b(), sigma)), (1.0, load)]);
        res.relative()
    }

    /// Mixed elliptic projection of `u(·, t₀)`: the discrete solution with
    /// load `(-Δu(t₀), φ)`. Returns `(ũ_h, σ̃_h)`.
    pub fn elliptic_projection(
        &mut self,
        laplacian: impl Fn(Point) -> f64 + Sync,
    ) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let load = density_load(&self.op, |x| -laplacian(x));
        self.solve_elliptic_mixed(&load)
    }

    /// One step of the mixed heat equation `u_t - div σ = f`, `σ = ∇u`.
    pub fn step_parabolic(&mut self, load: &LoadAssembler, traj: &mut Trajectory, i: usize) -> Result<(), SolverError> {
        self.check_step(traj, i)?;
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let f = match traj.scheme {
            Scheme::BackwardEuler => load.assemble(t1),
            Scheme::CrankNicolson => average(&load.assemble(t0), &load.assemble(t1)),
        };
        let (u, sigma) = self.parabolic_solve(traj.scheme, &traj.u[i - 1], &traj.sigma[i - 1], &f, t1 - t0, i)?;
        traj.push(u, sigma);
        Ok(())
    }

    /// Implicit parabolic step for a given (already time-averaged) load.
    fn parabolic_solve(
        &mut self,
        scheme: Scheme,
        u0: &[f64],
        sigma0: &[f64],
        f: &[f64],
        dt: f64,
        step: usize,
    ) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let op = self.op.clone();
        // Backward Euler:  A(U - U0)/dt - B Σ = F,
        // Crank-Nicolson:  A(U - U0)/dt - B (Σ + Σ0)/2 = F̄; both with BᵀU + DΣ = 0.
        let theta = match scheme {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        };
        let mut forcing = f.to_vec();
        if theta < 1.0 {
            linalg::axpy(1.0 - theta, &linalg::matvec(op.b(), sigma0), &mut forcing);
        }
        // U = U0 + dt A⁻¹(forcing + θ B Σ)
        let ainv_forcing = linalg::matvec(op.a_inverse(), &forcing);
        let mut base = u0.to_vec();
        linalg::axpy(dt, &ainv_forcing, &mut base);
        let rhs: Vec<f64> = linalg::matvec_transpose(op.b(), &base).into_iter().map(|v| -v).collect();
        let sigma = self.solve_schur(theta * dt, &rhs)?;
        let mut u = base;
        let ainv_bs = linalg::matvec(op.a_inverse(), &linalg::matvec(op.b(), &sigma));
        linalg::axpy(theta * dt, &ainv_bs, &mut u);

        // Residual of the block system, first row scaled by dt.
        let mut res = BlockResidual::default();
        res.row(&[
            (1.0, &linalg::matvec(op.a(), &u)),
            (-theta * dt, &linalg::matvec(op.b(), &sigma)),
            (-1.0, &linalg::matvec(op.a(), u0)),
            (-dt, &forcing),
        ]);
        res.row(&[(1.0, &linalg::matvec_transpose(op.b(), &u)), (1.0, &linalg::matvec(op.d(), &sigma))]);
        self.record_residual(step, &res)?;
        Ok((u, sigma))
    }

    /// One step of the velocity-stress wave system
    /// `μ_t - div σ = f`, `σ_t = ∇μ`.
    pub fn step_hyperbolic(&mut self, load: &LoadAssembler, traj: &mut Trajectory, i: usize) -> Result<(), SolverError> {
        self.check_step(traj, i)?;
        let op = self.op.clone();
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let k = t1 - t0;
        let (mu0, sigma0) = (&traj.u[i - 1], &traj.sigma[i - 1]);
        let (theta, f) = match traj.scheme {
            Scheme::BackwardEuler => (1.0, load.assemble(t1)),
            Scheme::CrankNicolson => (0.5, average(&load.assemble(t0), &load.assemble(t1))),
        };
        // A(W - W0)/k - B(θΣ + (1-θ)Σ0) = F
        // D(Σ - Σ0)/k + Bᵀ(θW + (1-θ)W0) = 0
        // Eliminating W: (D + θ²k² BᵀA⁻¹B) Σ = DΣ0 - k Bᵀ(W0 + θ k A⁻¹(F + (1-θ) BΣ0))
        let mut forcing = f.clone();
        if theta < 1.0 {
            linalg::axpy(1.0 - theta, &linalg::matvec(op.b(), sigma0), &mut forcing);
        }
        let ainv_forcing = linalg::matvec(op.a_inverse(), &forcing);
        let mut w = mu0.clone();
        linalg::axpy(theta * k, &ainv_forcing, &mut w);
        let mut rhs = linalg::matvec(op.d(), sigma0);
        linalg::axpy(-k, &linalg::matvec_transpose(op.b(), &w), &mut rhs);
        let sigma = self.solve_schur(theta * theta * k * k, &rhs)?;
        // W = W0 + k A⁻¹(forcing + θ B Σ)
        let mut mu = mu0.clone();
        linalg::axpy(k, &ainv_forcing, &mut mu);
        linalg::axpy(theta * k, &linalg::matvec(op.a_inverse(), &linalg::matvec(op.b(), &sigma)), &mut mu);

        let mut res = BlockResidual::default();
        res.row(&[
            (1.0, &linalg::matvec(op.a(), &mu)),
            (-theta * k, &linalg::matvec(op.b(), &sigma)),
            (-1.0, &linalg::matvec(op.a(), mu0)),
            (-k, &forcing),
        ]);
        res.row(&[
            (1.0, &linalg::matvec(op.d(), &sigma)),
            (theta * k, &linalg::matvec_transpose(op.b(), &mu)),
            (-1.0, &linalg::matvec(op.d(), sigma0)),
            ((1.0 - theta) * k, &linalg::matvec_transpose(op.b(), mu0)),
        ]);
        self.record_residual(i, &res)?;
        traj.push(mu, sigma);
        Ok(())
    }

    /// One backward Euler step of `u_t - div σ + F(u) = f`, with `(F(u_h), φ)`
    /// lagged inside a fixed-point loop.
    pub fn step_semilinear(
        &mut self,
        load: &LoadAssembler,
        nonlinear: &NonlinearTerm,
        traj: &mut Trajectory,
        i: usize,
    ) -> Result<(), SolverError> {
        self.check_step(traj, i)?;
        if traj.scheme != Scheme::BackwardEuler {
            return Err(SolverError::Trajectory("the semi-linear stepper is backward Euler only".into()));
        }
        let op = self.op.clone();
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let dt = t1 - t0;
        let f = load.assemble(t1);
        let rule = TriangleRule::with_degree(assembly::LOAD_QUADRATURE_DEGREE);
        let mut iterate = traj.u[i - 1].clone();
        for _ in 0..FIXED_POINT_MAX_ITERATIONS {
            let n = nonlinear_load(&op, &rule, nonlinear, &iterate);
            let rhs = linalg::sub(&f, &n);
            let (u, sigma) = self.parabolic_solve(Scheme::BackwardEuler, &traj.u[i - 1], &traj.sigma[i - 1], &rhs, dt, i)?;
            let change = linalg::energy_norm(op.a(), &linalg::sub(&u, &iterate));
            if change < FIXED_POINT_TOLERANCE {
                traj.push(u, sigma);
                return Ok(());
            }
            iterate = u;
        }
        Err(SolverError::FixedPoint {
            step: i,
            iterations: FIXED_POINT_MAX_ITERATIONS,
            dt_lipschitz: dt * nonlinear.lipschitz(),
        })
    }

    fn record_residual(&mut self, step: usize, res: &BlockResidual) -> Result<(), SolverError> {
        let relative = res.relative();
        self.residual_log.push(relative);
        if relative > self.tolerance {
            return Err(SolverError::Residual { step, relative, tolerance: self.tolerance });
        }
        Ok(())
    }
}

/// Residual of a block system written row by row as signed terms that sum
/// to zero. It is measured relative to the size of the terms: the flux row
/// has a zero right-hand side, so what cancels there is `Dσ` against `Bᵀu`.
#[derive(Debug, Default)]
struct BlockResidual {
    residual_sq: f64,
    scale_sq: f64,
}

impl BlockResidual {
    fn row(&mut self, terms: &[(f64, &[f64])]) {
        let mut r = vec![0.0; terms[0].1.len()];
        for (c, v) in terms {
            linalg::axpy(*c, v, &mut r);
            self.scale_sq += c * c * linalg::dot(v, v);
        }
        self.residual_sq += linalg::dot(&r, &r);
    }

    fn relative(&self) -> f64 {
        if self.scale_sq == 0.0 {
            0.0
        } else {
            (self.residual_sq / self.scale_sq).sqrt()
        }
    }
}

/// `‖μ‖²_A + ‖σ‖²_D`.
pub fn discrete_energy(op: &MixedOperator, u: &[f64], sigma: &[f64]) -> f64 {
    linalg::dot(u, &linalg::matvec(op.a(), u)) + linalg::dot(sigma, &linalg::matvec(op.d(), sigma))
}

/// `(w, φ_i)` on the density space of `op`.
pub fn density_load(op: &MixedOperator, w: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
    let rule = TriangleRule::with_degree(assembly::LOAD_QUADRATURE_DEGREE);
    assembly::assemble_density_load(op.density_space(), &rule, |_, _, x| w(x))
}

/// `(F(u_h), φ_i)` by quadrature of `F` at the quadrature points.
pub fn nonlinear_load(op: &MixedOperator, rule: &TriangleRule, nonlinear: &NonlinearTerm, u: &[f64]) -> Vec<f64> {
    let space = op.density_space();
    let n = space.local_dimension();
    assembly::assemble_density_load(space, rule, |t, xi, _| {
        let mut vals = vec![0.0; n];
        space.reference().tabulate_scalar(xi, &mut vals);
        let uh: f64 = space.local_indices(t).iter().zip(&vals).map(|(&g, v)| u[g] * v).sum();
        nonlinear.eval(uh)
    })
}

fn average(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

fn domain_diameter_squared(op: &MixedOperator) -> f64 {
    let v = op.density_space().mesh().vertices();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in v {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)
}
