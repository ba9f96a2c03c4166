use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixed_mol::study::{self, StudyError};
use mixed_mol::{ConvergenceReport, ElementPair, Eoc, LevelRange, Problem, Scheme, StudyConfig};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Convergence studies for mixed finite element semi-discretizations.
#[derive(Parser)]
#[command(name = "mixed-mol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mixed Poisson problem.
    Elliptic(StudyArgs),
    /// Heat equation.
    Heat(StudyArgs),
    /// Velocity-stress wave equation.
    Wave(StudyArgs),
    /// Heat equation with a Lipschitz reaction term.
    Semilinear(StudyArgs),
    /// Built-in solutions, element pairs and predicted orders.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// TOML study configuration; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Refinement levels, e.g. `2..5`.
    #[arg(long, value_name = "A..B")]
    levels: Option<LevelRange>,
    /// Element pair: RT0/DG0, BDM1/DG0 or RT1/DG1.
    #[arg(long, value_name = "ID")]
    pair: Option<ElementPair>,
    /// Time stepping: backward-euler (be) or crank-nicolson (cn).
    #[arg(long, value_name = "ID")]
    scheme: Option<Scheme>,
    /// Built-in solution identifier (see `list`).
    #[arg(long, value_name = "ID")]
    solution: Option<String>,
    #[arg(long, value_name = "T")]
    final_time: Option<f64>,
    /// Directory for the CSV and JSON reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Config { .. } | StudyError::Element(_) => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (problem, args) = match cli.command {
        Command::List { json } => {
            list(json);
            return ExitCode::SUCCESS;
        }
        Command::Elliptic(a) => (Problem::Elliptic, a),
        Command::Heat(a) => (Problem::Heat, a),
        Command::Wave(a) => (Problem::Wave, a),
        Command::Semilinear(a) => (Problem::Semilinear, a),
    };
    match run(problem, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn config(problem: Problem, args: &StudyArgs) -> Result<StudyConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let src = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            StudyConfig::from_toml_for(problem, &src)?
        }
        None => StudyConfig::new(problem),
    };
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    if let Some(p) = args.pair {
        cfg.pair = p;
    }
    if let Some(s) = args.scheme {
        cfg.scheme = Some(s);
        cfg.dt_rule = None;
    }
    if let Some(s) = &args.solution {
        cfg.solution = Some(s.clone());
        cfg.expression = None;
    }
    if let Some(t) = args.final_time {
        cfg.final_time = t;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if problem == Problem::Elliptic && cfg.scheme.is_some() {
        return Err(Failure::Config("scheme: the elliptic problem has no time stepping".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(problem: Problem, args: &StudyArgs) -> Result<bool, Failure> {
    let cfg = config(problem, args)?;
    let report = study::run_study(&cfg)?;
    if let Some(dir) = &cfg.out {
        write_reports(dir, &report).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print_table(&report);
    }
    Ok(report.pass)
}

fn write_reports(dir: &Path, report: &ConvergenceReport) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}-{}", report.problem, report.pair.replace('/', "-").to_ascii_lowercase());
    let csv = report.to_csv_string().map_err(std::io::Error::other)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    fs::write(dir.join(format!("{stem}.json")), report.to_json() + "\n")
}

fn print_table(report: &ConvergenceReport) {
    print!("{} {} solution={}", report.problem, report.pair, report.solution);
    if let Some(s) = &report.scheme {
        print!(" scheme={s}");
    }
    if let Some(t) = report.final_time {
        print!(" T={t}");
    }
    println!();
    print!("{:>5} {:>10}", "level", "h");
    for n in &report.norms {
        print!(" {:>12} {:>6}", n.name, "eoc");
    }
    println!();
    for (row, level) in report.levels.iter().enumerate() {
        print!("{level:>5} {:>10.3e}", report.h[row]);
        for n in &report.norms {
            let eoc = if row == 0 { String::new() } else { eoc_cell(n.eoc[row - 1]) };
            print!(" {:>12.4e} {eoc:>6}", n.values[row]);
        }
        println!();
    }
    for n in &report.norms {
        let verdict = match n.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "reported",
        };
        match n.predicted_order {
            Some(p) => println!("  {}: predicted {p} (tol {}), {verdict} [{}]", n.name, n.tolerance, n.branch),
            None => println!("  {}: {verdict} [{}]", n.name, n.branch),
        }
    }
    for d in &report.diagnostics {
        let worst = d.values.iter().copied().fold(0.0, f64::max);
        match d.bound {
            Some(b) => println!("  {}: max {worst:.3e} (bound {b:e}) {}", d.name, if d.pass == Some(false) { "FAIL" } else { "pass" }),
            None => println!("  {}: max {worst:.3e}", d.name),
        }
    }
    println!("{}", if report.pass { "PASS" } else { "FAIL" });
}

fn eoc_cell(e: Eoc) -> String {
    match e {
        Eoc::Order(o) => format!("{o:.3}"),
        Eoc::Exact => "exact".into(),
    }
}

fn list(json: bool) {
    let catalog = study::list_defaults();
    if json {
        println!("{}", serde_json::to_string_pretty(&catalog).expect("catalog serializes"));
        return;
    }
    println!("solutions:");
    for s in &catalog.solutions {
        println!("  {:<22} {:<10} {}", s.id, s.problem, s.description);
    }
    println!("pairs:");
    for p in &catalog.pairs {
        println!("  {:<9} r={} {} flux", p.id, p.r, p.family);
        for (problem, preds) in &p.predictions {
            let orders: Vec<String> = preds
                .iter()
                .map(|q| match q.order {
                    Some(o) => format!("{}={o}", q.norm),
                    None => format!("{}=-", q.norm),
                })
                .collect();
            println!("    {:<10} {}", problem.as_str(), orders.join(" "));
        }
    }
    println!("nonlinearities: {}", catalog.nonlinearities.join(", "));
    println!("dt rules: {}", catalog.dt_rules.join(", "));
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixed_mol::SolverError;

    #[test]
    fn solver_errors_are_not_config_errors() {
        let e = StudyError::Solver { level: 2, source: SolverError::SingularSchur { residual: 1e-3 } };
        assert!(matches!(Failure::from(e), Failure::Solver(_)));
        let e = StudyError::Config { field: "levels", message: "x".into() };
        assert!(matches!(Failure::from(e), Failure::Config(_)));
    }
}
