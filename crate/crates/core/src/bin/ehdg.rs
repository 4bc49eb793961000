use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ensemble_hdg::harness::output::write_convergence_csv;
use ensemble_hdg::harness::{
    benchmark_ensemble_vs_separate, run_level, ConvergenceTable, DtRule, ErrorAccumulator, RunConfig, SnapshotPolicy,
    SnapshotWriter,
};
use ensemble_hdg::mesh::Mesh;
use ensemble_hdg::problem::{check_admissibility, ProblemSpec};
use ensemble_hdg::solver::{snap_time_step, EnsembleSolver, Observer, SolverOptions};
use ensemble_hdg::{HdgError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ehdg",
    version,
    about = "Ensemble HDG solver for parameterized convection-diffusion problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence study over mesh levels.
    Converge(Common),
    /// Single run on the first level (or a mesh file), with optional snapshots.
    Run(Common),
    /// Ensemble run against separate single-member runs.
    Bench(Common),
    /// Admissibility of the ensemble and the stabilization constant.
    Check(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Built-in problem: 1 smooth, 2 interior layers, 3 boundary layers.
    #[arg(long)]
    example: Option<usize>,
    /// Polynomial degree k.
    #[arg(long)]
    degree: Option<usize>,
    /// Mesh levels `a..b` (inclusive) or a single level; n = 2^level.
    #[arg(long)]
    levels: Option<String>,
    /// `h`, `h3` or `fixed=<dt>`, with h = sqrt(2)/n.
    #[arg(long = "dt-rule")]
    dt_rule: Option<String>,
    /// Final time.
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Abort when the ensemble condition fails.
    #[arg(long = "strict-admissibility")]
    strict_admissibility: bool,
    /// Mesh in the plain-text format instead of the uniform square.
    #[arg(long = "mesh-file")]
    mesh_file: Option<PathBuf>,
    /// `none`, `final` or `every=<m>`.
    #[arg(long)]
    snapshot: Option<String>,
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let bad = || HdgError::Parse(format!("invalid level range '{s}'"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

/// Options after merging the configuration file and the flags.
struct Resolved {
    problem: ProblemSpec,
    degree: usize,
    levels: Vec<usize>,
    dt_rule: DtRule,
    out: PathBuf,
    strict: bool,
    mesh_file: Option<PathBuf>,
    snapshot: SnapshotPolicy,
}

impl Resolved {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if c.example.is_some() {
            cfg.example = c.example;
            cfg.members.clear();
        }
        if cfg.example.is_none() && cfg.members.is_empty() {
            cfg.example = Some(1);
        }
        if c.final_time.is_some() {
            cfg.final_time = c.final_time;
        }
        let problem = cfg.problem()?;
        let degree = c.degree.or(cfg.degree).unwrap_or(1);
        let levels = match &c.levels {
            Some(s) => parse_levels(s)?,
            None => cfg.levels.clone().unwrap_or_else(|| (1..=4).collect()),
        };
        let dt_rule = match c.dt_rule.as_ref().or(cfg.dt_rule.as_ref()) {
            Some(s) => s.parse()?,
            None => DtRule::for_degree(degree),
        };
        let snapshot = match c.snapshot.as_ref().or(cfg.snapshot.as_ref()) {
            Some(s) => s.parse()?,
            None => SnapshotPolicy::None,
        };
        Ok(Self {
            problem,
            degree,
            levels,
            dt_rule,
            out: c.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from("out")),
            strict: c.strict_admissibility || cfg.strict_admissibility,
            mesh_file: c.mesh_file.clone().or(cfg.mesh_file),
            snapshot,
        })
    }

    fn mesh(&self) -> Result<Mesh> {
        match &self.mesh_file {
            Some(p) => Mesh::read(p),
            None => {
                let level = *self
                    .levels
                    .first()
                    .ok_or_else(|| HdgError::InvalidArgument("no mesh level".into()))?;
                Mesh::uniform_square(1 << level)
            }
        }
    }

    fn options(&self, mesh: &Mesh) -> SolverOptions {
        let mut o = SolverOptions::new(self.degree, self.dt_rule.dt(mesh.h_max()));
        o.strict_admissibility = self.strict;
        o
    }
}

fn print_table(table: &ConvergenceTable) {
    let members = table.rows.iter().map(|r| r.member + 1).max().unwrap_or(0);
    let f = |v: Option<f64>| v.map(|r| format!("{r:.2}")).unwrap_or_default();
    for j in 0..members {
        println!("member {}", j + 1);
        println!(
            "{:>6} {:>11} {:>11} {:>5} {:>11} {:>5} {:>11} {:>5}",
            "level", "h/sqrt2", "Eq", "rate", "Eu", "rate", "Eu*", "rate"
        );
        for r in table.member(j) {
            println!(
                "{:>6} {:>11.4e} {:>11.4e} {:>5} {:>11.4e} {:>5} {:>11.4e} {:>5}",
                r.level,
                r.h_over_sqrt2,
                r.errors.flux,
                f(r.flux_rate),
                r.errors.scalar,
                f(r.scalar_rate),
                r.errors.postprocessed,
                f(r.postprocessed_rate)
            );
        }
    }
}

fn converge(r: &Resolved) -> Result<()> {
    let mut table = ConvergenceTable::default();
    for &level in &r.levels {
        let run = run_level(&r.problem, r.degree, level, r.dt_rule)?;
        eprintln!(
            "level {level}: {} steps of {:.4e}, tau = {}",
            run.steps, run.dt, run.tau
        );
        table.push_level(level, &run.errors);
    }
    print_table(&table);
    std::fs::create_dir_all(&r.out)?;
    let path = r.out.join("convergence.csv");
    write_convergence_csv(&table, BufWriter::new(File::create(&path)?))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(r: &Resolved) -> Result<()> {
    let mesh = r.mesh()?;
    let options = r.options(&mesh);
    let mut solver = EnsembleSolver::new(mesh, r.problem.clone(), options)?;
    if !solver.admissibility().is_admissible() {
        eprintln!("warning: {}", solver.admissibility());
    }
    eprintln!(
        "{} elements, {} members, {} steps of {:.4e}, tau = {}",
        solver.mesh().num_elements(),
        solver.spec().num_members(),
        solver.num_steps(),
        solver.dt(),
        solver.tau()
    );
    let mut snapshots = SnapshotWriter::new(&r.out, r.snapshot);
    let mut errors = ErrorAccumulator::new();
    let has_exact = r.problem.has_exact();
    let state = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut snapshots];
        if has_exact {
            observers.push(&mut errors);
        }
        solver.run(&mut observers)?
    };
    for (j, u) in state.u.iter().enumerate() {
        let max = u.coeffs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("member {}: max |coefficient| = {max:.4e}", j + 1);
    }
    if has_exact {
        for (j, e) in errors.errors().iter().enumerate() {
            println!(
                "member {}: Eq = {:.4e}, Eu = {:.4e}, Eu* = {:.4e}",
                j + 1,
                e.flux,
                e.scalar,
                e.postprocessed
            );
        }
    }
    for p in &snapshots.written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn bench(r: &Resolved) -> Result<()> {
    let level = *r
        .levels
        .first()
        .ok_or_else(|| HdgError::InvalidArgument("no mesh level".into()))?;
    let h = 2f64.sqrt() / (1usize << level) as f64;
    let report = benchmark_ensemble_vs_separate(&r.problem, r.degree, level, r.dt_rule.dt(h), r.problem.final_time)?;
    println!("steps: {}", report.steps);
    println!(
        "ensemble: {:.3} s, {} factorization(s)",
        report.ensemble_seconds, report.ensemble_factorizations
    );
    for (j, s) in report.separate_seconds.iter().enumerate() {
        println!("member {} alone: {s:.3} s", j + 1);
    }
    println!("separate factorizations: {}", report.separate_factorizations);
    println!("ratio: {:.3}", report.ratio());
    Ok(())
}

fn check(r: &Resolved) -> Result<bool> {
    let mesh = r.mesh()?;
    let (dt, steps) = snap_time_step(r.problem.final_time, r.dt_rule.dt(mesh.h_max()))?;
    let times: Vec<f64> = (1..=steps).map(|n| n as f64 * dt).collect();
    let report = check_admissibility(&r.problem, &mesh, r.degree, &times)?;
    println!("{report}");
    let tau = ensemble_hdg::problem::choose_tau(&r.problem, &mesh, r.degree, &times)?;
    println!("tau = {tau}");
    Ok(report.is_admissible() || !r.strict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Converge(c) => Resolved::new(c).and_then(|r| converge(&r)).map(|_| true),
        Command::Run(c) => Resolved::new(c).and_then(|r| run(&r)).map(|_| true),
        Command::Bench(c) => Resolved::new(c).and_then(|r| bench(&r)).map(|_| true),
        Command::Check(c) => Resolved::new(c).and_then(|r| check(&r)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
