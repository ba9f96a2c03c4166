//! Convergence studies: build the discretization on a range of uniformly
//! refined meshes, run the solver, measure errors and compare observed
//! orders with the predicted ones.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, AnalysisError, BochnerError, ConvergenceReport, Diagnostic, ManufacturedSolution, NormSeries, Problem,
    BUILTIN_SOLUTIONS,
};
use crate::assembly::{AssemblyError, LoadAssembler, LoadFn, MixedOperator};
use crate::elements::{ElementError, ElementFamily, FESpace, Family};
use crate::linalg;
use crate::mesh::SimplicialMesh;
use crate::solvers::{self, NonlinearTerm, SaddleSolver, Scheme, SolverError, Trajectory};

/// Largest refinement level a study may request (32768 triangles).
pub const MAX_LEVEL: usize = 7;
pub const ORDER_ONE_TOLERANCE: f64 = 0.15;
pub const ORDER_TWO_TOLERANCE: f64 = 0.2;
pub const HYPERBOLIC_TOLERANCE: f64 = 0.2;
pub const ENERGY_DRIFT_BOUND: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("level {level}: {source}")]
    Solver {
        level: usize,
        #[source]
        source: SolverError,
    },
    #[error("level {level}: {source}")]
    Analysis {
        level: usize,
        #[source]
        source: AnalysisError,
    },
    #[error(transparent)]
    Report(AnalysisError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

fn config_error(field: &'static str, message: impl Into<String>) -> StudyError {
    StudyError::Config { field, message: message.into() }
}

/// The admissible (flux, density) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ElementPair {
    Rt0Dg0,
    Bdm1Dg0,
    Rt1Dg1,
}

impl ElementPair {
    pub const ALL: [ElementPair; 3] = [ElementPair::Rt0Dg0, ElementPair::Bdm1Dg0, ElementPair::Rt1Dg1];

    pub fn id(self) -> &'static str {
        match self {
            ElementPair::Rt0Dg0 => "RT0/DG0",
            ElementPair::Bdm1Dg0 => "BDM1/DG0",
            ElementPair::Rt1Dg1 => "RT1/DG1",
        }
    }

    pub fn flux(self) -> ElementFamily {
        match self {
            ElementPair::Rt0Dg0 => ElementFamily::RT0,
            ElementPair::Bdm1Dg0 => ElementFamily::BDM1,
            ElementPair::Rt1Dg1 => ElementFamily::RT1,
        }
    }

    pub fn density(self) -> ElementFamily {
        match self {
            ElementPair::Rt0Dg0 | ElementPair::Bdm1Dg0 => ElementFamily::DG0,
            ElementPair::Rt1Dg1 => ElementFamily::DG1,
        }
    }

    /// Polynomial degree `r` of the density space.
    pub fn r(self) -> usize {
        self.density().polynomial_degree()
    }

    pub fn flux_family(self) -> Family {
        self.flux().family()
    }
}

impl fmt::Display for ElementPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ElementPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "rt0dg0" => Ok(ElementPair::Rt0Dg0),
            "bdm1dg0" => Ok(ElementPair::Bdm1Dg0),
            "rt1dg1" => Ok(ElementPair::Rt1Dg1),
            _ => Err(format!("unknown element pair `{s}` (expected RT0/DG0, BDM1/DG0 or RT1/DG1)")),
        }
    }
}

impl TryFrom<String> for ElementPair {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ElementPair> for String {
    fn from(p: ElementPair) -> Self {
        p.id().to_string()
    }
}

/// Inclusive range of refinement levels, written `a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LevelRange {
    pub min: usize,
    pub max: usize,
}

impl LevelRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        self.min..=self.max
    }

    pub fn len(self) -> usize {
        self.max.saturating_sub(self.min) + 1
    }

    pub fn is_empty(self) -> bool {
        self.max < self.min
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `a..b`, got `{s}`"))?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad level `{v}` in `{s}`"));
        Ok(Self { min: parse(a)?, max: parse(b)? })
    }
}

impl TryFrom<String> for LevelRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LevelRange> for String {
    fn from(r: LevelRange) -> Self {
        format!("{}..{}", r.min, r.max)
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

/// How the time step follows the mesh size `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtRule {
    /// `Δt = h / 8`.
    ProportionalH,
    /// `Δt = h² / 4`.
    ProportionalH2,
    Fixed(f64),
}

impl DtRule {
    pub fn default_for(scheme: Scheme) -> Self {
        match scheme {
            Scheme::BackwardEuler => DtRule::ProportionalH2,
            Scheme::CrankNicolson => DtRule::ProportionalH,
        }
    }

    pub fn target(self, h: f64) -> f64 {
        match self {
            DtRule::ProportionalH => h / 8.0,
            DtRule::ProportionalH2 => h * h / 4.0,
            DtRule::Fixed(v) => v,
        }
    }

    /// Number of equal steps covering `[0, T]` with `Δt` at most the target.
    pub fn steps(self, h: f64, final_time: f64) -> usize {
        ((final_time / self.target(h)) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: Problem,
    #[serde(default = "default_pair")]
    pub pair: ElementPair,
    #[serde(default = "default_levels")]
    pub levels: LevelRange,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    /// Defaults to backward Euler, or Crank-Nicolson for the wave problem.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Defaults to the rule matching the scheme.
    #[serde(default)]
    pub dt_rule: Option<DtRule>,
    /// Built-in solution identifier; defaults per problem.
    #[serde(default)]
    pub solution: Option<String>,
    /// Inline solution `u(x, y, t)`; overrides `solution`.
    #[serde(default)]
    pub expression: Option<String>,
    /// Semi-linear problems only: `zero`, `sin` or `linear`.
    #[serde(default)]
    pub nonlinearity: Option<String>,
    /// Sobolev index for the wave regularity terms.
    #[serde(default)]
    pub sobolev_index: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_pair() -> ElementPair {
    ElementPair::Rt0Dg0
}

fn default_levels() -> LevelRange {
    LevelRange::new(2, 5)
}

fn default_final_time() -> f64 {
    0.5
}

impl StudyConfig {
    pub fn new(problem: Problem) -> Self {
        Self {
            problem,
            pair: default_pair(),
            levels: default_levels(),
            final_time: default_final_time(),
            scheme: None,
            dt_rule: None,
            solution: None,
            expression: None,
            nonlinearity: None,
            sobolev_index: 0,
            out: None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self, StudyError> {
        toml::from_str(src).map_err(|e| config_error("config", e.to_string()))
    }

    /// Like [`StudyConfig::from_toml`], but `problem` may be omitted and
    /// must equal `problem` when present.
    pub fn from_toml_for(problem: Problem, src: &str) -> Result<Self, StudyError> {
        let mut table: toml::Table = src.parse().map_err(|e: toml::de::Error| config_error("config", e.to_string()))?;
        table.entry("problem").or_insert_with(|| problem.as_str().into());
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| config_error("config", e.to_string()))?;
        if cfg.problem != problem {
            return Err(config_error("problem", format!("config is for `{}`, not `{problem}`", cfg.problem)));
        }
        Ok(cfg)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(match self.problem {
            Problem::Wave => Scheme::CrankNicolson,
            _ => Scheme::BackwardEuler,
        })
    }

    pub fn dt_rule(&self) -> DtRule {
        self.dt_rule.unwrap_or_else(|| DtRule::default_for(self.scheme()))
    }

    pub fn solution_id(&self) -> &str {
        match (&self.expression, &self.solution) {
            (Some(_), _) => "custom",
            (None, Some(id)) => id,
            (None, None) => default_solution(self.problem),
        }
    }

    pub fn manufactured_solution(&self) -> Result<ManufacturedSolution, StudyError> {
        let nonlinear = match &self.nonlinearity {
            Some(name) => analysis::nonlinearity_by_name(name)
                .ok_or_else(|| config_error("nonlinearity", format!("unknown nonlinearity `{name}` (zero, sin, linear)")))?,
            None => match self.expression.is_none().then(|| analysis::builtin_solution(self.solution_id())).flatten() {
                Some(b) => analysis::nonlinearity_by_name(b.nonlinearity).expect("catalog names are valid"),
                None => NonlinearTerm::zero(),
            },
        };
        let ms = match &self.expression {
            Some(src) => ManufacturedSolution::parse("custom", self.problem, src, nonlinear)
                .map_err(|e| config_error("expression", e.to_string()))?,
            None => {
                let id = self.solution_id();
                let b = analysis::builtin_solution(id)
                    .ok_or_else(|| config_error("solution", format!("unknown solution `{id}`; see `list`")))?;
                if b.problem != self.problem {
                    return Err(config_error(
                        "solution",
                        format!("`{id}` is a {} solution, not {}", b.problem, self.problem),
                    ));
                }
                ManufacturedSolution::parse(b.id, b.problem, b.expression, nonlinear)
                    .expect("catalog expressions parse")
            }
        };
        ms.self_check(self.final_time).map_err(|e| config_error("solution", e.to_string()))?;
        Ok(ms)
    }

    /// Field-level validation, run before any work.
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.levels.max <= self.levels.min {
            return Err(config_error("levels", format!("need max > min for convergence orders, got {}", self.levels)));
        }
        if self.levels.max > MAX_LEVEL {
            return Err(config_error("levels", format!("max level {} exceeds {MAX_LEVEL}", self.levels.max)));
        }
        if !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return Err(config_error("final_time", format!("must be positive, got {}", self.final_time)));
        }
        if let Some(DtRule::Fixed(v)) = self.dt_rule {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_error("dt_rule", format!("fixed step must be positive, got {v}")));
            }
        }
        if self.problem == Problem::Semilinear && self.scheme() != Scheme::BackwardEuler {
            return Err(config_error("scheme", "semi-linear studies use backward Euler"));
        }
        if self.nonlinearity.is_some() && self.problem != Problem::Semilinear {
            return Err(config_error("nonlinearity", "only semi-linear problems take a nonlinearity"));
        }
        if self.sobolev_index > 2 {
            return Err(config_error("sobolev_index", "must be 0, 1 or 2"));
        }
        self.manufactured_solution()?;
        Ok(())
    }
}

pub fn default_solution(problem: Problem) -> &'static str {
    match problem {
        Problem::Elliptic => "elliptic-sine",
        Problem::Heat => "heat-separable",
        Problem::Wave => "wave-standing",
        Problem::Semilinear => "semilinear-sine",
    }
}

/// Predicted order of one norm and the branch it comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub norm: &'static str,
    /// `None` when the estimate allows no decay.
    pub order: Option<f64>,
    pub tolerance: f64,
    pub branch: String,
}

fn tolerance_for(order: f64) -> f64 {
    if order >= 2.0 {
        ORDER_TWO_TOLERANCE
    } else {
        ORDER_ONE_TOLERANCE
    }
}

fn predict(norm: &'static str, order: Option<f64>, branch: String) -> Prediction {
    Prediction { norm, order, tolerance: order.map_or(ORDER_ONE_TOLERANCE, tolerance_for), branch }
}

/// Orders predicted by the estimates for a problem and pair, with `s` at
/// the largest value the branch allows.
pub fn predictions(problem: Problem, pair: ElementPair) -> Vec<Prediction> {
    let r = pair.r();
    let fam = match pair.flux_family() {
        Family::Trimmed => "trimmed",
        Family::Full => "full",
    };
    match problem {
        Problem::Elliptic => {
            // full family gains one order in σ over the trimmed one
            let sigma = (r + 1 + usize::from(pair.flux_family() == Family::Full)) as f64;
            let b = format!("elliptic, r={r}, {fam} flux");
            vec![
                predict("u", Some((r + 1) as f64), b.clone()),
                predict("sigma", Some(sigma), b.clone()),
                predict("div_sigma", Some((r + 1) as f64), b),
            ]
        }
        Problem::Heat | Problem::Semilinear => {
            let thm = if problem == Problem::Heat { "parabolic" } else { "semi-linear" };
            let u = match (problem, r) {
                (_, 0) => 1.0,
                (Problem::Heat, _) => 2.0,
                _ => 1.0,
            };
            let mut out = vec![
                predict("u", Some(u), format!("{thm} u, r={r}, s=0")),
                predict("sigma", Some(1.0), format!("{thm} sigma, r={r}, {fam} flux, s=0")),
            ];
            if r == 0 {
                out.push(predict("div_sigma", Some(1.0), format!("{thm} div sigma, r=0, s=1")));
            } else {
                out.push(predict("div_sigma", None, format!("{thm} div sigma, r={r}, s<=r-1=0: no decay asserted")));
            }
            out
        }
        Problem::Wave => {
            let b = format!("velocity-stress, r={r}, s=r+1");
            let mut combined = predict("mu_plus_sigma", Some((r + 1) as f64), b.clone());
            combined.tolerance = HYPERBOLIC_TOLERANCE;
            vec![
                combined,
                predict("e1", Some((r + 1) as f64), format!("initial interpolation, r={r}")),
                predict("mu", None, b.clone()),
                predict("sigma", None, b.clone()),
                predict("div_sigma", None, b),
            ]
        }
    }
}

/// Everything measured on one level.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub level: usize,
    pub h: f64,
    pub dt: Option<f64>,
    pub steps: usize,
    pub errors: Option<BochnerError>,
    /// Values keyed by norm name, in prediction order.
    pub norms: Vec<(&'static str, f64)>,
    pub diagnostics: Vec<(&'static str, f64, Option<f64>)>,
}

impl LevelOutcome {
    pub fn norm(&self, name: &str) -> Option<f64> {
        self.norms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(n, _, _)| *n == name).map(|(_, v, _)| *v)
    }
}

/// Discretization of one level, shared by the level runners.
pub struct LevelSetup {
    pub level: usize,
    pub mesh: Arc<SimplicialMesh>,
    pub op: Arc<MixedOperator>,
}

impl LevelSetup {
    pub fn new(level: usize, pair: ElementPair) -> Result<Self, StudyError> {
        let mesh = Arc::new(SimplicialMesh::unit_square_refined(level));
        let flux = FESpace::new(mesh.clone(), pair.flux())?;
        let density = FESpace::new(mesh.clone(), pair.density())?;
        let op = Arc::new(MixedOperator::assemble(flux, density)?);
        Ok(Self { level, mesh, op })
    }

    pub fn load(&self, ms: &ManufacturedSolution) -> LoadAssembler {
        let ms = ms.clone();
        let f: Arc<LoadFn> = Arc::new(move |x, t| ms.forcing(x, t));
        LoadAssembler::new(self.op.density_space().clone(), f)
    }
}

/// Runs a full trajectory for a time-dependent problem. The initial data
/// follow the estimates: `g_h` from the elliptic solve with load `-Δg` for
/// parabolic problems, canonical interpolants of `u_1` and `∇u_0` for the
/// wave problem.
pub fn run_trajectory(
    setup: &LevelSetup,
    solver: &mut SaddleSolver,
    ms: &ManufacturedSolution,
    scheme: Scheme,
    final_time: f64,
    steps: usize,
) -> Result<Trajectory, StudyError> {
    let level = setup.level;
    let solver_err = |source| StudyError::Solver { level, source };
    let kind = ms.problem().kind().ok_or_else(|| config_error("problem", "elliptic problems have no trajectory"))?;
    let (u0, s0) = match ms.problem() {
        Problem::Wave => {
            let mu0 = setup.op.density_space().canonical_interpolation_scalar(|x| ms.u_t(x, 0.0))?;
            let s0 = setup.op.flux_space().canonical_interpolation(|x| ms.sigma(x, 0.0))?;
            (mu0, s0)
        }
        _ => solver.elliptic_projection(|x| ms.laplacian(x, 0.0)).map_err(solver_err)?,
    };
    let mut traj = Trajectory::uniform(final_time, steps, scheme, kind, u0, s0).map_err(solver_err)?;
    let load = setup.load(ms);
    for i in 1..=steps {
        match ms.problem() {
            Problem::Heat => solver.step_parabolic(&load, &mut traj, i),
            Problem::Wave => solver.step_hyperbolic(&load, &mut traj, i),
            Problem::Semilinear => solver.step_semilinear(&load, ms.nonlinear(), &mut traj, i),
            Problem::Elliptic => unreachable!(),
        }
        .map_err(solver_err)?;
    }
    Ok(traj)
}

fn run_level(cfg: &StudyConfig, ms: &ManufacturedSolution, level: usize) -> Result<LevelOutcome, StudyError> {
    let setup = LevelSetup::new(level, cfg.pair)?;
    let mut solver = SaddleSolver::new(setup.op.clone());
    let h = setup.mesh.h();
    let analysis_err = |source| StudyError::Analysis { level, source };
    if cfg.problem == Problem::Elliptic {
        let load = solvers::density_load(&setup.op, |x| ms.forcing(x, 0.0));
        let (u, sigma) = solver.solve_elliptic_mixed(&load).map_err(|source| StudyError::Solver { level, source })?;
        let e = analysis::spatial_errors(&setup.op, ms, &u, &sigma, 0.0);
        return Ok(LevelOutcome {
            level,
            h,
            dt: None,
            steps: 0,
            errors: None,
            norms: vec![("u", e.density), ("sigma", e.sigma), ("div_sigma", e.div_sigma)],
            diagnostics: vec![],
        });
    }

    let rule = cfg.dt_rule();
    let steps = rule.steps(h, cfg.final_time);
    let scheme = cfg.scheme();
    let traj = run_trajectory(&setup, &mut solver, ms, scheme, cfg.final_time, steps)?;
    let errors = analysis::bochner_error(&traj, ms, &setup.op).map_err(analysis_err)?;
    let mut diagnostics = Vec::new();
    let norms = match cfg.problem {
        Problem::Wave => {
            let terms = analysis::hyperbolic_error_terms(ms, &setup.op, &traj, cfg.sobolev_index).map_err(analysis_err)?;
            let energies: Vec<f64> = (0..traj.populated())
                .map(|i| solvers::discrete_energy(&setup.op, traj.u(i), traj.sigma(i)))
                .collect();
            let e0 = energies[0];
            let drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / if e0 > 0.0 { e0 } else { 1.0 };
            let conservative = scheme == Scheme::CrankNicolson && ms.forcing_is_zero();
            diagnostics.push(("energy_drift", drift, conservative.then_some(ENERGY_DRIFT_BOUND)));
            diagnostics.push(("e2", terms.e2, None));
            diagnostics.push(("e3", terms.e3, None));
            let mu = errors.norm_mu.expect("wave run");
            vec![
                ("mu_plus_sigma", mu + errors.norm_sigma),
                ("e1", terms.e1),
                ("mu", mu),
                ("sigma", errors.norm_sigma),
                ("div_sigma", errors.norm_div_sigma),
            ]
        }
        _ => {
            let d = analysis::error_decomposition(&traj, ms, &mut solver, &[0]).map_err(analysis_err)?;
            diagnostics.push(("theta0", d[0].theta, Some(1e-10)));
            diagnostics.push(("epsilon0", d[0].epsilon, Some(1e-9)));
            if cfg.problem == Problem::Semilinear {
                let nl = ms.nonlinear();
                let (lo, hi) = (0..traj.populated())
                    .flat_map(|i| traj.u(i).iter().copied())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let samples = NonlinearTerm::sample_range(lo, hi, 200);
                let excess = (nl.empirical_lipschitz(&samples) - nl.lipschitz()).max(0.0);
                diagnostics.push(("lipschitz_excess", excess, Some(0.0)));
            }
            if scheme == Scheme::BackwardEuler && cfg.problem == Problem::Heat && ms.forcing_is_zero() {
                let norms: Vec<f64> = (0..traj.populated()).map(|i| linalg::energy_norm(setup.op.a(), traj.u(i))).collect();
                let growth = norms.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max);
                diagnostics.push(("a_norm_growth", growth, Some(0.0)));
            }
            vec![
                ("u", errors.norm_u.expect("parabolic run")),
                ("sigma", errors.norm_sigma),
                ("div_sigma", errors.norm_div_sigma),
            ]
        }
    };
    Ok(LevelOutcome { level, h, dt: Some(cfg.final_time / steps as f64), steps, errors: Some(errors), norms, diagnostics })
}

/// Runs every level of the study (in parallel) and assembles the report.
pub fn run_study(cfg: &StudyConfig) -> Result<ConvergenceReport, StudyError> {
    cfg.validate()?;
    let ms = cfg.manufactured_solution()?;
    let outcomes: Vec<LevelOutcome> = cfg
        .levels
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|level| run_level(cfg, &ms, level))
        .collect::<Result<_, _>>()?;
    build_report(cfg, &ms, outcomes)
}

fn build_report(cfg: &StudyConfig, ms: &ManufacturedSolution, outcomes: Vec<LevelOutcome>) -> Result<ConvergenceReport, StudyError> {
    let h: Vec<f64> = outcomes.iter().map(|o| o.h).collect();
    let mut norms = Vec::new();
    for p in predictions(cfg.problem, cfg.pair) {
        let values: Vec<f64> = outcomes.iter().map(|o| o.norm(p.norm).expect("every level measures every norm")).collect();
        norms.push(NormSeries::new(p.norm, &h, values, p.order, p.tolerance, p.branch).map_err(StudyError::Report)?);
    }
    let mut diagnostics = Vec::new();
    if let Some(first) = outcomes.first() {
        for &(name, _, bound) in &first.diagnostics {
            let values = outcomes.iter().map(|o| o.diagnostic(name).expect("same diagnostics on every level")).collect();
            diagnostics.push(Diagnostic::new(name, values, bound));
        }
    }
    let time_dependent = cfg.problem != Problem::Elliptic;
    let mut report = ConvergenceReport {
        problem: cfg.problem,
        pair: cfg.pair.id().to_string(),
        scheme: time_dependent.then(|| cfg.scheme().to_string()),
        solution: ms.name().to_string(),
        final_time: time_dependent.then_some(cfg.final_time),
        levels: outcomes.iter().map(|o| o.level).collect(),
        h,
        dt: outcomes.iter().map(|o| o.dt).collect(),
        errors: outcomes.into_iter().map(|o| o.errors).collect(),
        norms,
        diagnostics,
        pass: false,
    };
    report.update_pass();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairInfo {
    pub id: &'static str,
    pub flux: String,
    pub density: String,
    pub r: usize,
    pub family: &'static str,
    pub predictions: Vec<(Problem, Vec<Prediction>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Catalog {
    pub solutions: Vec<analysis::BuiltinSolution>,
    pub pairs: Vec<PairInfo>,
    pub nonlinearities: Vec<&'static str>,
    pub dt_rules: Vec<&'static str>,
}

/// Built-in solutions, element pairs with their predicted orders, and the
/// other identifiers a configuration may use.
pub fn list_defaults() -> Catalog {
    let problems = [Problem::Elliptic, Problem::Heat, Problem::Wave, Problem::Semilinear];
    Catalog {
        solutions: BUILTIN_SOLUTIONS.to_vec(),
        pairs: ElementPair::ALL
            .iter()
            .map(|&p| PairInfo {
                id: p.id(),
                flux: p.flux().to_string(),
                density: p.density().to_string(),
                r: p.r(),
                family: match p.flux_family() {
                    Family::Full => "full",
                    Family::Trimmed => "trimmed",
                },
                predictions: problems.iter().map(|&pr| (pr, predictions(pr, p))).collect(),
            })
            .collect(),
        nonlinearities: vec!["zero", "sin", "linear"],
        dt_rules: vec!["proportional-h (h/8)", "proportional-h2 (h^2/4)", "fixed"],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_ids_round_trip() {
        for p in ElementPair::ALL {
            assert_eq!(p.id().parse::<ElementPair>().unwrap(), p);
        }
        assert_eq!("bdm1-dg0".parse::<ElementPair>().unwrap(), ElementPair::Bdm1Dg0);
        assert!("RT2/DG0".parse::<ElementPair>().is_err());
    }

    #[test]
    fn level_ranges_parse() {
        assert_eq!("2..5".parse::<LevelRange>().unwrap(), LevelRange::new(2, 5));
        assert_eq!("1..=3".parse::<LevelRange>().unwrap(), LevelRange::new(1, 3));
        assert!("5".parse::<LevelRange>().is_err());
    }

    #[test]
    fn dt_rules_cover_the_interval() {
        let h = 2f64.sqrt() / 8.0;
        let rule = DtRule::ProportionalH2;
        let m = rule.steps(h, 0.5);
        assert!(0.5 / m as f64 <= rule.target(h) * (1.0 + 1e-12));
        assert_eq!(DtRule::Fixed(0.1).steps(1.0, 0.5), 5);
    }

    #[test]
    fn toml_config_with_defaults() {
        let cfg = StudyConfig::from_toml("problem = \"heat\"\npair = \"BDM1/DG0\"\nlevels = \"1..3\"\n").unwrap();
        assert_eq!(cfg.pair, ElementPair::Bdm1Dg0);
        assert_eq!(cfg.scheme(), Scheme::BackwardEuler);
        assert_eq!(cfg.dt_rule(), DtRule::ProportionalH2);
        assert_eq!(cfg.solution_id(), "heat-separable");
        let fixed = StudyConfig::from_toml("problem = \"wave\"\ndt_rule = { fixed = 0.01 }\n").unwrap();
        assert_eq!(fixed.dt_rule(), DtRule::Fixed(0.01));
        assert_eq!(fixed.scheme(), Scheme::CrankNicolson);
        assert!(StudyConfig::from_toml("problem = \"heat\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn problem_may_come_from_the_caller() {
        let cfg = StudyConfig::from_toml_for(Problem::Wave, "levels = \"1..2\"\n").unwrap();
        assert_eq!(cfg.problem, Problem::Wave);
        assert!(StudyConfig::from_toml_for(Problem::Wave, "problem = \"wave\"\n").is_ok());
        let err = StudyConfig::from_toml_for(Problem::Wave, "problem = \"heat\"\n").unwrap_err();
        assert!(matches!(err, StudyError::Config { field: "problem", .. }));
        assert_eq!("cn".parse::<Scheme>().unwrap(), Scheme::CrankNicolson);
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut cfg = StudyConfig::new(Problem::Heat);
        cfg.levels = LevelRange::new(3, 3);
        assert!(matches!(cfg.validate(), Err(StudyError::Config { field: "levels", .. })));
        let mut cfg = StudyConfig::new(Problem::Heat);
        cfg.final_time = 0.0;
        assert!(matches!(cfg.validate(), Err(StudyError::Config { field: "final_time", .. })));
        let mut cfg = StudyConfig::new(Problem::Heat);
        cfg.solution = Some("wave-standing".into());
        assert!(matches!(cfg.validate(), Err(StudyError::Config { field: "solution", .. })));
        let mut cfg = StudyConfig::new(Problem::Semilinear);
        cfg.scheme = Some(Scheme::CrankNicolson);
        assert!(matches!(cfg.validate(), Err(StudyError::Config { field: "scheme", .. })));
    }
}
