//! Manufactured solutions, space-time error norms, the elliptic-projection
//! error split, initial-data/regularity terms for the wave estimate and
//! convergence orders.

use std::fmt;
use std::io;

use serde::ser::{Serialize, Serializer};
use serde::Deserialize;
use thiserror::Error;

use crate::assembly::MixedOperator;
use crate::elements::FESpace;
use crate::expr::{self, Expr, ExprError, Program, Var};
use crate::linalg;
use crate::mesh::{Point, SimplicialMesh};
use crate::quadrature::{LineRule, TriangleRule};
use crate::solvers::{NonlinearTerm, ProblemKind, SaddleSolver, SolverError, Trajectory};

/// Spatial rule for errors along trajectories. Degree 6 integrates the
/// squared error of the piecewise-linear pairs exactly up to the
/// smoothness of the exact field; see the oracle test against degree 10.
pub const ERROR_QUADRATURE_DEGREE: usize = 6;
/// Rule for integrals of exact fields only.
pub const EXACT_QUADRATURE_DEGREE: usize = 10;
const TIME_GAUSS_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("unknown manufactured solution `{0}`")]
    UnknownSolution(String),
    #[error("manufactured solution is inconsistent: {what} at (x, y, t) = {at:?} differs by {deviation:e}")]
    Inconsistent { what: &'static str, at: [f64; 3], deviation: f64 },
    #[error("manufactured solution does not vanish on the boundary: u{at:?} = {value:e}")]
    NonzeroBoundary { at: [f64; 3], value: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("trajectory is incomplete ({populated} of {nodes} nodes)")]
    IncompleteTrajectory { populated: usize, nodes: usize },
    #[error("{0}")]
    Eoc(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Elliptic,
    Heat,
    Wave,
    #[serde(alias = "semi-linear")]
    Semilinear,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Elliptic => "elliptic",
            Problem::Heat => "heat",
            Problem::Wave => "wave",
            Problem::Semilinear => "semilinear",
        }
    }

    pub fn kind(self) -> Option<ProblemKind> {
        match self {
            Problem::Elliptic => None,
            Problem::Heat => Some(ProblemKind::Parabolic),
            Problem::Wave => Some(ProblemKind::Hyperbolic),
            Problem::Semilinear => Some(ProblemKind::SemiLinear),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A built-in entry of the solution catalog.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BuiltinSolution {
    pub id: &'static str,
    pub problem: Problem,
    pub expression: &'static str,
    pub nonlinearity: &'static str,
    pub description: &'static str,
}

pub const BUILTIN_SOLUTIONS: &[BuiltinSolution] = &[
    BuiltinSolution {
        id: "elliptic-sine",
        problem: Problem::Elliptic,
        expression: "sin(pi*x)*sin(pi*y)",
        nonlinearity: "zero",
        description: "u = sin(πx)sin(πy), -Δu = 2π²u",
    },
    BuiltinSolution {
        id: "elliptic-zero",
        problem: Problem::Elliptic,
        expression: "0",
        nonlinearity: "zero",
        description: "zero load, zero solution",
    },
    BuiltinSolution {
        id: "heat-separable",
        problem: Problem::Heat,
        expression: "exp(-t)*sin(pi*x)*sin(pi*y)",
        nonlinearity: "zero",
        description: "u = e^{-t}sin(πx)sin(πy), f = (2π² - 1)u",
    },
    BuiltinSolution {
        id: "heat-steady",
        problem: Problem::Heat,
        expression: "sin(pi*x)*sin(pi*y)",
        nonlinearity: "zero",
        description: "time-independent u, so u_t = 0 and the error is the elliptic projection error",
    },
    BuiltinSolution {
        id: "wave-standing",
        problem: Problem::Wave,
        expression: "cos(sqrt(2)*pi*t)*sin(pi*x)*sin(pi*y)",
        nonlinearity: "zero",
        description: "standing wave, f = 0, u_0 = sin(πx)sin(πy), u_1 = 0",
    },
    BuiltinSolution {
        id: "wave-zero",
        problem: Problem::Wave,
        expression: "0",
        nonlinearity: "zero",
        description: "zero data, zero solution",
    },
    BuiltinSolution {
        id: "semilinear-sine",
        problem: Problem::Semilinear,
        expression: "exp(-t)*sin(pi*x)*sin(pi*y)",
        nonlinearity: "sin",
        description: "heat-separable with F(u) = sin(u) and f = u_t - Δu + sin(u)",
    },
];

pub fn builtin_solution(id: &str) -> Option<&'static BuiltinSolution> {
    BUILTIN_SOLUTIONS.iter().find(|b| b.id == id)
}

pub fn nonlinearity_by_name(name: &str) -> Option<NonlinearTerm> {
    match name {
        "zero" => Some(NonlinearTerm::zero()),
        "sin" => Some(NonlinearTerm::sine()),
        "linear" => Some(NonlinearTerm::linear()),
        _ => None,
    }
}

/// Exact fields of a problem, derived symbolically from `u(x, y, t)`.
#[derive(Debug, Clone)]
pub struct ManufacturedSolution {
    name: String,
    problem: Problem,
    u: Expr,
    u_t: Expr,
    u_tt: Expr,
    grad: [Expr; 2],
    laplacian: Expr,
    /// Linear part of the forcing; the nonlinear term is added on top.
    forcing: Expr,
    nonlinear: NonlinearTerm,
    compiled: Compiled,
}

/// Evaluation programs for the hot paths (loads and error integrands).
#[derive(Debug, Clone)]
struct Compiled {
    u: Program,
    u_t: Program,
    laplacian: Program,
    laplacian_t: Program,
    sigma: Program,
    /// linear forcing, u
    forcing: Program,
    /// density, σ_x, σ_y, div σ
    errors: Program,
}

impl ManufacturedSolution {
    pub fn new(name: impl Into<String>, problem: Problem, u: Expr, nonlinear: NonlinearTerm) -> Self {
        let u_t = u.diff(Var::T);
        let u_tt = u_t.diff(Var::T);
        let grad = [u.diff(Var::X), u.diff(Var::Y)];
        let laplacian = u.laplacian();
        let laplacian_t = laplacian.diff(Var::T);
        let forcing = match problem {
            Problem::Elliptic => expr::neg(laplacian.clone()),
            Problem::Heat | Problem::Semilinear => expr::sub(u_t.clone(), laplacian.clone()),
            Problem::Wave => expr::sub(u_tt.clone(), laplacian.clone()),
        };
        let nonlinear = if problem == Problem::Semilinear { nonlinear } else { NonlinearTerm::zero() };
        let density = if problem == Problem::Wave { &u_t } else { &u };
        let compiled = Compiled {
            u: Program::compile(&[&u]),
            u_t: Program::compile(&[&u_t]),
            laplacian: Program::compile(&[&laplacian]),
            laplacian_t: Program::compile(&[&laplacian_t]),
            sigma: Program::compile(&[&grad[0], &grad[1]]),
            forcing: Program::compile(&[&forcing, &u]),
            errors: Program::compile(&[density, &grad[0], &grad[1], &laplacian]),
        };
        Self { name: name.into(), problem, u, u_t, u_tt, grad, laplacian, forcing, nonlinear, compiled }
    }

    pub fn parse(name: impl Into<String>, problem: Problem, src: &str, nonlinear: NonlinearTerm) -> Result<Self, AnalysisError> {
        Ok(Self::new(name, problem, Expr::parse(src)?, nonlinear))
    }

    pub fn builtin(id: &str) -> Result<Self, AnalysisError> {
        let b = builtin_solution(id).ok_or_else(|| AnalysisError::UnknownSolution(id.to_string()))?;
        let nl = nonlinearity_by_name(b.nonlinearity).expect("catalog names are valid");
        Self::parse(b.id, b.problem, b.expression, nl)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn expression(&self) -> &Expr {
        &self.u
    }

    pub fn nonlinear(&self) -> &NonlinearTerm {
        &self.nonlinear
    }

    pub fn u(&self, x: Point, t: f64) -> f64 {
        self.compiled.u.eval_one(x[0], x[1], t)
    }

    pub fn u_t(&self, x: Point, t: f64) -> f64 {
        self.compiled.u_t.eval_one(x[0], x[1], t)
    }

    pub fn u_tt(&self, x: Point, t: f64) -> f64 {
        self.u_tt.eval(x[0], x[1], t)
    }

    /// `σ = ∇u`.
    pub fn sigma(&self, x: Point, t: f64) -> Point {
        let mut out = [0.0; 2];
        self.compiled.sigma.eval(x[0], x[1], t, &mut out);
        out
    }

    /// `div σ = Δu`.
    pub fn laplacian(&self, x: Point, t: f64) -> f64 {
        self.compiled.laplacian.eval_one(x[0], x[1], t)
    }

    pub fn laplacian_t(&self, x: Point, t: f64) -> f64 {
        self.compiled.laplacian_t.eval_one(x[0], x[1], t)
    }

    /// Right-hand side `f` of the problem the solution was built for.
    pub fn forcing(&self, x: Point, t: f64) -> f64 {
        let mut out = [0.0; 2];
        self.compiled.forcing.eval(x[0], x[1], t, &mut out);
        if self.problem == Problem::Semilinear {
            out[0] + self.nonlinear.eval(out[1])
        } else {
            out[0]
        }
    }

    /// Density (see [`Self::density`]), `σ` and `div σ` in one evaluation.
    pub fn exact_fields(&self, x: Point, t: f64) -> (f64, Point, f64) {
        let mut out = [0.0; 4];
        self.compiled.errors.eval(x[0], x[1], t, &mut out);
        (out[0], [out[1], out[2]], out[3])
    }

    /// Whether the forcing vanishes identically, detected symbolically.
    pub fn forcing_is_zero(&self) -> bool {
        matches!(self.forcing, Expr::Const(c) if c == 0.0) && (self.problem != Problem::Semilinear || self.nonlinear.name() == "zero")
    }

    /// Density field the time stepper approximates: `u`, or `μ = u_t` for
    /// the wave problem.
    pub fn density(&self, x: Point, t: f64) -> f64 {
        match self.problem {
            Problem::Wave => self.u_t(x, t),
            _ => self.u(x, t),
        }
    }

    /// Samples at which consistency checks are made: interior points
    /// from a Halton sequence, boundary points on all four sides.
    fn samples(final_time: f64) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let halton = |mut i: usize, b: usize| {
            let (mut f, mut r) = (1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        };
        let interior = (1..=24).map(|i| [0.05 + 0.9 * halton(i, 2), 0.05 + 0.9 * halton(i, 3), final_time * halton(i, 5)]).collect();
        let mut boundary = Vec::new();
        for i in 1..=8 {
            let s = halton(i, 2);
            let t = final_time * halton(i, 3);
            boundary.extend([[s, 0.0, t], [s, 1.0, t], [0.0, s, t], [1.0, s, t]]);
        }
        (interior, boundary)
    }

    /// Cross-checks the symbolic derivatives against central differences
    /// and the forcing against its definition, and checks that `u`
    /// vanishes on the boundary of the unit square.
    pub fn self_check(&self, final_time: f64) -> Result<(), AnalysisError> {
        let (interior, boundary) = Self::samples(final_time.max(1e-3));
        let scale = interior.iter().map(|p| self.u.eval(p[0], p[1], p[2]).abs()).fold(1.0, f64::max);
        for p in boundary {
            let value = self.u.eval(p[0], p[1], p[2]);
            if value.abs() > 1e-12 * scale {
                return Err(AnalysisError::NonzeroBoundary { at: p, value });
            }
        }
        // Truncation error of the stencils is O(δ²)·(third/fourth derivatives).
        let d1 = 1e-5;
        let d2 = 1e-3;
        for p in interior {
            let [x, y, t] = p;
            let f = |x: f64, y: f64, t: f64| self.u.eval(x, y, t);
            let check = |what: &'static str, symbolic: f64, numeric: f64, tol: f64| {
                let deviation = (symbolic - numeric).abs();
                if deviation > tol * (1.0 + symbolic.abs()) {
                    Err(AnalysisError::Inconsistent { what, at: p, deviation })
                } else {
                    Ok(())
                }
            };
            let c = f(x, y, t);
            check("u_t", self.u_t.eval(x, y, t), (f(x, y, t + d1) - f(x, y, t - d1)) / (2.0 * d1), 1e-6)?;
            check("du/dx", self.grad[0].eval(x, y, t), (f(x + d1, y, t) - f(x - d1, y, t)) / (2.0 * d1), 1e-6)?;
            check("du/dy", self.grad[1].eval(x, y, t), (f(x, y + d1, t) - f(x, y - d1, t)) / (2.0 * d1), 1e-6)?;
            check("u_tt", self.u_tt.eval(x, y, t), (f(x, y, t + d2) - 2.0 * c + f(x, y, t - d2)) / (d2 * d2), 1e-4)?;
            let lap = (f(x + d2, y, t) + f(x - d2, y, t) + f(x, y + d2, t) + f(x, y - d2, t) - 4.0 * c) / (d2 * d2);
            check("laplacian", self.laplacian.eval(x, y, t), lap, 1e-4)?;
            let expected = match self.problem {
                Problem::Elliptic => -self.laplacian.eval(x, y, t),
                Problem::Heat => self.u_t.eval(x, y, t) - self.laplacian.eval(x, y, t),
                Problem::Semilinear => self.u_t.eval(x, y, t) - self.laplacian.eval(x, y, t) + self.nonlinear.eval(c),
                Problem::Wave => self.u_tt.eval(x, y, t) - self.laplacian.eval(x, y, t),
            };
            check("forcing", self.forcing([x, y], t), expected, 1e-10)?;
        }
        Ok(())
    }

    /// All spatial partial derivatives of order `≤ s` of the listed fields,
    /// one entry per multi-index.
    fn derivative_family(fields: &[Expr], s: usize) -> Vec<Expr> {
        let mut out = Vec::new();
        for f in fields {
            let mut layer = vec![f.clone()];
            out.push(f.clone());
            for _ in 0..s {
                // d/dx of every entry, then d/dy of the last one: this walks
                // each multi-index of the next order exactly once.
                let mut next: Vec<Expr> = layer.iter().map(|e| e.diff(Var::X)).collect();
                next.push(layer.last().expect("non-empty").diff(Var::Y));
                out.extend(next.iter().cloned());
                layer = next;
            }
        }
        out
    }
}

/// `sqrt(Σ_{|α| ≤ s} ‖∂^α w(t)‖²)` over the mesh for the components `w`.
pub fn sobolev_norm(mesh: &SimplicialMesh, fields: &[Expr], s: usize, t: f64) -> f64 {
    let family = ManufacturedSolution::derivative_family(fields, s);
    let rule = TriangleRule::with_degree(EXACT_QUADRATURE_DEGREE);
    integrate(mesh, &rule, |x| family.iter().map(|e| e.eval(x[0], x[1], t).powi(2)).sum()).sqrt()
}

/// `∫_Ω w` by the given rule over all triangles.
pub fn integrate(mesh: &SimplicialMesh, rule: &TriangleRule, w: impl Fn(Point) -> f64) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let g = mesh.triangle_geometry(t);
        let mut local = 0.0;
        for (xi, wt) in rule.iter() {
            local += wt * w(g.map(xi));
        }
        total += local * g.det.abs();
    }
    total
}

/// Reference tabulation of both spaces of a mixed pair at the points of a
/// rule, reused for every triangle and time node.
#[derive(Debug, Clone)]
pub struct ErrorKernel {
    rule: TriangleRule,
    flux_values: Vec<Vec<Point>>,
    flux_divs: Vec<Vec<f64>>,
    density_values: Vec<Vec<f64>>,
}

/// Spatial L² errors of one density/flux pair against exact fields.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpatialErrors {
    pub density: f64,
    pub sigma: f64,
    pub div_sigma: f64,
}

impl ErrorKernel {
    pub fn new(op: &MixedOperator, degree: usize) -> Self {
        let rule = TriangleRule::with_degree(degree);
        let flux = op.flux_space();
        let density = op.density_space();
        let (nf, nd) = (flux.local_dimension(), density.local_dimension());
        let mut flux_values = Vec::with_capacity(rule.len());
        let mut flux_divs = Vec::with_capacity(rule.len());
        let mut density_values = Vec::with_capacity(rule.len());
        for &xi in &rule.points {
            let mut v = vec![[0.0; 2]; nf];
            let mut d = vec![0.0; nf];
            flux.reference().tabulate_vector(xi, &mut v, &mut d);
            let mut s = vec![0.0; nd];
            density.reference().tabulate_scalar(xi, &mut s);
            flux_values.push(v);
            flux_divs.push(d);
            density_values.push(s);
        }
        Self { rule, flux_values, flux_divs, density_values }
    }

    pub fn errors(
        &self,
        op: &MixedOperator,
        u: &[f64],
        sigma: &[f64],
        exact: impl Fn(Point) -> (f64, Point, f64),
    ) -> SpatialErrors {
        let flux = op.flux_space();
        let density = op.density_space();
        let (mut eu, mut es, mut ed) = (0.0, 0.0, 0.0);
        for t in 0..flux.mesh().num_triangles() {
            let g = flux.geometry(t);
            let fi = flux.local_indices(t);
            let fs = flux.local_signs(t);
            let di = density.local_indices(t);
            let (mut lu, mut ls, mut ld) = (0.0, 0.0, 0.0);
            for (q, (xi, wt)) in self.rule.iter().enumerate() {
                let x = g.map(xi);
                let uh: f64 = di.iter().zip(&self.density_values[q]).map(|(&k, v)| u[k] * v).sum();
                let mut sref = [0.0; 2];
                let mut dref = 0.0;
                for k in 0..fi.len() {
                    let c = sigma[fi[k]] * fs[k];
                    sref[0] += c * self.flux_values[q][k][0];
                    sref[1] += c * self.flux_values[q][k][1];
                    dref += c * self.flux_divs[q][k];
                }
                let sh = g.piola(sref);
                let (ue, s, de) = exact(x);
                lu += wt * (uh - ue).powi(2);
                ls += wt * ((sh[0] - s[0]).powi(2) + (sh[1] - s[1]).powi(2));
                ld += wt * (dref / g.det - de).powi(2);
            }
            eu += lu * g.det;
            es += ls * g.det;
            ed += ld * g.det;
        }
        SpatialErrors { density: eu.sqrt(), sigma: es.sqrt(), div_sigma: ed.sqrt() }
    }
}

/// Spatial errors of the discrete pair `(u, σ)` at time `t`, against the
/// exact density (`u`, or `u_t` for the wave problem), `∇u` and `Δu`.
pub fn spatial_errors(op: &MixedOperator, ms: &ManufacturedSolution, u: &[f64], sigma: &[f64], t: f64) -> SpatialErrors {
    ErrorKernel::new(op, ERROR_QUADRATURE_DEGREE).errors(op, u, sigma, |x| ms.exact_fields(x, t))
}

/// `‖w_h - w‖_{L²}` for a density field.
pub fn density_l2_error(space: &FESpace, coeffs: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let rule = TriangleRule::with_degree(EXACT_QUADRATURE_DEGREE);
    let n = space.local_dimension();
    let mut vals = vec![0.0; n];
    let mut total = 0.0;
    for t in 0..space.mesh().num_triangles() {
        let g = space.geometry(t);
        let idx = space.local_indices(t);
        let mut local = 0.0;
        for (xi, wt) in rule.iter() {
            space.reference().tabulate_scalar(xi, &mut vals);
            let uh: f64 = idx.iter().zip(&vals).map(|(&k, v)| coeffs[k] * v).sum();
            local += wt * (uh - exact(g.map(xi))).powi(2);
        }
        total += local * g.det;
    }
    total.sqrt()
}

/// Space-time errors `‖·‖_{L²(I, L²)}` of a trajectory.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BochnerError {
    /// `‖u_h - u‖`; absent for wave runs, which do not compute `u`.
    pub norm_u: Option<f64>,
    pub norm_sigma: f64,
    pub norm_div_sigma: f64,
    /// `‖μ_h - μ‖` with `μ = u_t`, wave runs only.
    pub norm_mu: Option<f64>,
    pub time_rule: String,
}

impl BochnerError {
    /// The density error, whichever unknown the run carries.
    pub fn density(&self) -> f64 {
        self.norm_u.or(self.norm_mu).expect("one density norm is always set")
    }
}

/// Composite trapezoid of per-node squared norms, then the square root.
/// A single node is read as a stationary field.
pub fn trapezoid_l2(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    if times.len() == 1 {
        return values[0];
    }
    let mut acc = 0.0;
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i].powi(2) + values[i - 1].powi(2));
    }
    acc.sqrt()
}

fn check_trajectory(traj: &Trajectory, op: &MixedOperator) -> Result<(), AnalysisError> {
    if !traj.is_complete() {
        return Err(AnalysisError::IncompleteTrajectory { populated: traj.populated(), nodes: traj.times().len() });
    }
    let (nu, ns) = (op.density_space().dof_count(), op.flux_space().dof_count());
    for i in 0..traj.populated() {
        if traj.u(i).len() != nu {
            return Err(AnalysisError::DimensionMismatch { what: "density coefficients", expected: nu, got: traj.u(i).len() });
        }
        if traj.sigma(i).len() != ns {
            return Err(AnalysisError::DimensionMismatch { what: "flux coefficients", expected: ns, got: traj.sigma(i).len() });
        }
    }
    Ok(())
}

/// Per-node spatial errors of a complete trajectory.
pub fn node_errors(traj: &Trajectory, ms: &ManufacturedSolution, op: &MixedOperator) -> Result<Vec<SpatialErrors>, AnalysisError> {
    check_trajectory(traj, op)?;
    let kernel = ErrorKernel::new(op, ERROR_QUADRATURE_DEGREE);
    Ok(traj
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| kernel.errors(op, traj.u(i), traj.sigma(i), |x| ms.exact_fields(x, t)))
        .collect())
}

pub fn bochner_error(traj: &Trajectory, ms: &ManufacturedSolution, op: &MixedOperator) -> Result<BochnerError, AnalysisError> {
    let nodes = node_errors(traj, ms, op)?;
    let times = traj.times();
    let pick = |f: fn(&SpatialErrors) -> f64| trapezoid_l2(times, &nodes.iter().map(f).collect::<Vec<_>>());
    let density = pick(|e| e.density);
    let hyperbolic = traj.problem() == ProblemKind::Hyperbolic;
    Ok(BochnerError {
        norm_u: (!hyperbolic).then_some(density),
        norm_sigma: pick(|e| e.sigma),
        norm_div_sigma: pick(|e| e.div_sigma),
        norm_mu: hyperbolic.then_some(density),
        time_rule: format!("trapezoid on {} nodes, spatial degree {}", times.len(), ERROR_QUADRATURE_DEGREE),
    })
}

/// Norms of the split `u_h - u = θ + ρ` and `ε = σ_h - σ̃_h` at one node.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NodeDecomposition {
    pub index: usize,
    pub time: f64,
    /// `‖ũ_h - u‖_{L²}`.
    pub rho: f64,
    /// `‖u_h - ũ_h‖_{L²}`.
    pub theta: f64,
    /// `‖σ_h - σ̃_h‖_{L²}`.
    pub epsilon: f64,
    /// `‖u_h - u‖_{L²}`.
    pub total: f64,
}

/// Elliptic projection split of the error at the requested nodes of a
/// parabolic or semi-linear trajectory.
pub fn error_decomposition(
    traj: &Trajectory,
    ms: &ManufacturedSolution,
    solver: &mut SaddleSolver,
    nodes: &[usize],
) -> Result<Vec<NodeDecomposition>, AnalysisError> {
    let op = solver.operator().clone();
    let mut out = Vec::with_capacity(nodes.len());
    for &i in nodes {
        if i >= traj.populated() {
            return Err(AnalysisError::IncompleteTrajectory { populated: traj.populated(), nodes: i + 1 });
        }
        let t = traj.times()[i];
        let (ut, st) = solver.elliptic_projection(|x| ms.laplacian(x, t))?;
        let space = op.density_space();
        let theta = linalg::sub(traj.u(i), &ut);
        let eps = linalg::sub(traj.sigma(i), &st);
        out.push(NodeDecomposition {
            index: i,
            time: t,
            rho: density_l2_error(space, &ut, |x| ms.u(x, t)),
            theta: linalg::energy_norm(op.a(), &theta),
            epsilon: linalg::energy_norm(op.d(), &eps),
            total: density_l2_error(space, traj.u(i), |x| ms.u(x, t)),
        });
    }
    Ok(out)
}

/// Residual of the discrete error equation
/// `(θ_t, φ) - (div ε, φ) = -(ρ_t, φ)` with backward differences for `θ_t`
/// and the exact `ρ_t = R_h u_t - u_t`, measured in the `A⁻¹` norm at
/// every node `i ≥ 1`. Zero for the time-continuous system, `O(Δt)` for a
/// backward Euler trajectory.
pub fn lemma_residuals(traj: &Trajectory, ms: &ManufacturedSolution, solver: &mut SaddleSolver) -> Result<Vec<f64>, AnalysisError> {
    let op = solver.operator().clone();
    check_trajectory(traj, &op)?;
    let times = traj.times();
    let mut prev_theta = {
        let (u0, _) = solver.elliptic_projection(|x| ms.laplacian(x, 0.0))?;
        linalg::sub(traj.u(0), &u0)
    };
    let mut out = Vec::with_capacity(times.len() - 1);
    for i in 1..times.len() {
        let t = times[i];
        let dt = t - times[i - 1];
        let (ut, st) = solver.elliptic_projection(|x| ms.laplacian(x, t))?;
        let theta = linalg::sub(traj.u(i), &ut);
        let eps = linalg::sub(traj.sigma(i), &st);
        // R_h u_t: projection with load -Δu_t
        let (rut, _) = solver.elliptic_projection(|x| ms.laplacian_t(x, t))?;
        let ut_load = crate::solvers::density_load(&op, |x| ms.u_t(x, t));
        let dtheta: Vec<f64> = theta.iter().zip(&prev_theta).map(|(a, b)| (a - b) / dt).collect();
        let mut r = linalg::matvec(op.a(), &dtheta);
        linalg::axpy(-1.0, &linalg::matvec(op.b(), &eps), &mut r);
        linalg::axpy(1.0, &linalg::matvec(op.a(), &rut), &mut r);
        linalg::axpy(-1.0, &ut_load, &mut r);
        out.push(linalg::dot(&r, &linalg::matvec(op.a_inverse(), &r)).max(0.0).sqrt());
        prev_theta = theta;
    }
    Ok(out)
}

/// Initial-data and regularity terms of the wave estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HyperbolicTerms {
    pub s: usize,
    /// `‖u_1 - μ_h(0)‖ + ‖∇u_0 - σ_h(0)‖`.
    pub e1: f64,
    /// `‖u_1‖_{H^s} + ‖∇u_0‖_{H^s}`.
    pub e2: f64,
    /// `‖u_t‖_{L²(I,H^s)} + ‖σ‖_{L²(I,H^s)}`.
    pub e3: f64,
}

pub fn hyperbolic_error_terms(
    ms: &ManufacturedSolution,
    op: &MixedOperator,
    traj: &Trajectory,
    s: usize,
) -> Result<HyperbolicTerms, AnalysisError> {
    if traj.populated() == 0 {
        return Err(AnalysisError::IncompleteTrajectory { populated: 0, nodes: traj.times().len() });
    }
    let init = spatial_errors(op, ms, traj.u(0), traj.sigma(0), 0.0);
    let mesh = op.density_space().mesh();
    let ut = [ms.u_t.clone()];
    let grad = ms.grad.clone();
    let e2 = sobolev_norm(mesh, &ut, s, 0.0) + sobolev_norm(mesh, &grad, s, 0.0);
    let rule = LineRule::gauss_legendre(TIME_GAUSS_POINTS);
    let tf = traj.final_time();
    let (mut a, mut b) = (0.0, 0.0);
    for (&p, &w) in rule.points.iter().zip(&rule.weights) {
        let t = p * tf;
        a += w * tf * sobolev_norm(mesh, &ut, s, t).powi(2);
        b += w * tf * sobolev_norm(mesh, &grad, s, t).powi(2);
    }
    Ok(HyperbolicTerms { s, e1: init.density + init.sigma, e2, e3: a.sqrt() + b.sqrt() })
}

/// Observed order between two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eoc {
    Order(f64),
    /// An error vanished, so no order is defined.
    Exact,
}

impl Eoc {
    pub fn value(self) -> Option<f64> {
        match self {
            Eoc::Order(v) => Some(v),
            Eoc::Exact => None,
        }
    }
}

impl fmt::Display for Eoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eoc::Order(v) => write!(f, "{v:.4}"),
            Eoc::Exact => f.write_str("exact"),
        }
    }
}

impl Serialize for Eoc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Eoc::Order(v) => s.serialize_f64(*v),
            Eoc::Exact => s.serialize_str("exact"),
        }
    }
}

/// `log(e_L / e_{L+1}) / log(h_L / h_{L+1})` for consecutive levels, which
/// is `log₂` of the error ratio under mesh halving.
pub fn compute_eoc(errors: &[(f64, f64)]) -> Result<Vec<Eoc>, AnalysisError> {
    if errors.len() < 2 {
        return Err(AnalysisError::Eoc(format!("need at least two levels, got {}", errors.len())));
    }
    for &(h, e) in errors {
        if !(h > 0.0) || !(e >= 0.0) || !e.is_finite() {
            return Err(AnalysisError::Eoc(format!("invalid (h, error) = ({h}, {e})")));
        }
    }
    Ok(errors
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            if e0 == 0.0 || e1 == 0.0 {
                Eoc::Exact
            } else {
                Eoc::Order((e0 / e1).ln() / (h0 / h1).ln())
            }
        })
        .collect())
}

/// One measured norm across the levels of a study, with its predicted rate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub eoc: Vec<Eoc>,
    pub predicted_order: Option<f64>,
    pub tolerance: f64,
    pub branch: String,
    /// `None` when the branch predicts no rate worth asserting.
    pub pass: Option<bool>,
}

impl NormSeries {
    pub fn new(
        name: impl Into<String>,
        h: &[f64],
        values: Vec<f64>,
        predicted_order: Option<f64>,
        tolerance: f64,
        branch: impl Into<String>,
    ) -> Result<Self, AnalysisError> {
        let pairs: Vec<(f64, f64)> = h.iter().copied().zip(values.iter().copied()).collect();
        let eoc = compute_eoc(&pairs)?;
        // Judged on the finest pair: coarse levels are preasymptotic.
        let pass = predicted_order.map(|p| match eoc.last().expect("at least one order") {
            Eoc::Exact => true,
            Eoc::Order(v) => *v >= p - tolerance,
        });
        Ok(Self { name: name.into(), values, eoc, predicted_order, tolerance, branch: branch.into(), pass })
    }

    pub fn final_eoc(&self) -> Eoc {
        *self.eoc.last().expect("at least one order")
    }
}

/// A per-level quantity checked against a fixed bound (e.g. energy drift).
#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostic {
    pub name: String,
    pub values: Vec<f64>,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

impl Diagnostic {
    pub fn new(name: impl Into<String>, values: Vec<f64>, bound: Option<f64>) -> Self {
        let pass = bound.map(|b| values.iter().all(|v| *v <= b));
        Self { name: name.into(), values, bound, pass }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceReport {
    pub problem: Problem,
    pub pair: String,
    pub scheme: Option<String>,
    pub solution: String,
    pub final_time: Option<f64>,
    pub levels: Vec<usize>,
    pub h: Vec<f64>,
    pub dt: Vec<Option<f64>>,
    pub errors: Vec<Option<BochnerError>>,
    pub norms: Vec<NormSeries>,
    pub diagnostics: Vec<Diagnostic>,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn norm(&self, name: &str) -> Option<&NormSeries> {
        self.norms.iter().find(|n| n.name == name)
    }

    pub fn diagnostic(&self, name: &str) -> Option<&Diagnostic> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    /// Recomputes the overall verdict from the per-norm and diagnostic ones.
    pub fn update_pass(&mut self) {
        self.pass = self.norms.iter().all(|n| n.pass != Some(false)) && self.diagnostics.iter().all(|d| d.pass != Some(false));
    }

    /// Columns: `level, h, <norms>, eoc_<norms>, <diagnostics>`; the order
    /// on row `L` is the one between levels `L-1` and `L`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["level".to_string(), "h".to_string()];
        header.extend(self.norms.iter().map(|n| n.name.clone()));
        header.extend(self.norms.iter().map(|n| format!("eoc_{}", n.name)));
        header.extend(self.diagnostics.iter().map(|d| d.name.clone()));
        out.write_record(&header)?;
        for (row, level) in self.levels.iter().enumerate() {
            let mut rec = vec![level.to_string(), format!("{:e}", self.h[row])];
            rec.extend(self.norms.iter().map(|n| format!("{:e}", n.values[row])));
            rec.extend(self.norms.iter().map(|n| if row == 0 { String::new() } else { n.eoc[row - 1].to_string() }));
            rec.extend(self.diagnostics.iter().map(|d| format!("{:e}", d.values[row])));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, AnalysisError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
