//! Convergence studies over uniform mesh levels.

use std::fmt;
use std::str::FromStr;

use crate::error::{HdgError, Result};
use crate::harness::errors::{ErrorAccumulator, MemberErrors};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::solver::{EnsembleSolver, Observer, SolverOptions};

/// Time step as a function of the mesh size `h = sqrt(2) / n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtRule {
    H,
    H3,
    Fixed(f64),
}

impl DtRule {
    pub fn dt(&self, h: f64) -> f64 {
        match *self {
            DtRule::H => h,
            DtRule::H3 => h * h * h,
            DtRule::Fixed(v) => v,
        }
    }

    /// `h` for degree 0, `h³` otherwise.
    pub fn for_degree(k: usize) -> Self {
        if k == 0 {
            DtRule::H
        } else {
            DtRule::H3
        }
    }
}

impl FromStr for DtRule {
    type Err = HdgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(DtRule::H),
            "h3" => Ok(DtRule::H3),
            _ => {
                let v = s
                    .strip_prefix("fixed=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| HdgError::Parse(format!("unknown time-step rule '{s}'")))?;
                Ok(DtRule::Fixed(v))
            }
        }
    }
}

impl fmt::Display for DtRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DtRule::H => write!(f, "h"),
            DtRule::H3 => write!(f, "h3"),
            DtRule::Fixed(v) => write!(f, "fixed={v}"),
        }
    }
}

/// `log2(coarse / fine)`.
pub fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    /// `1 / n`.
    pub h_over_sqrt2: f64,
    /// Zero-based.
    pub member: usize,
    pub errors: MemberErrors,
    pub flux_rate: Option<f64>,
    pub scalar_rate: Option<f64>,
    pub postprocessed_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Appends one level; rates are filled from the previous level of the
    /// same member, if any.
    pub fn push_level(&mut self, level: usize, errors: &[MemberErrors]) {
        for (member, e) in errors.iter().enumerate() {
            let prev = self.rows.iter().rev().find(|r| r.member == member).map(|r| r.errors);
            self.rows.push(ConvergenceRow {
                level,
                h_over_sqrt2: 0.5f64.powi(level as i32),
                member,
                errors: *e,
                flux_rate: prev.map(|p| rate(p.flux, e.flux)),
                scalar_rate: prev.map(|p| rate(p.scalar, e.scalar)),
                postprocessed_rate: prev.map(|p| rate(p.postprocessed, e.postprocessed)),
            });
        }
    }

    pub fn member(&self, member: usize) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(move |r| r.member == member)
    }

    pub fn row(&self, level: usize, member: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.level == level && r.member == member)
    }
}

/// Result of one run at one mesh level.
#[derive(Clone, Debug)]
pub struct LevelRun {
    pub level: usize,
    pub dt: f64,
    pub steps: usize,
    pub tau: f64,
    pub errors: Vec<MemberErrors>,
    pub factorizations: usize,
}

/// Runs one level `n = 2^level` and measures errors against the exact solutions.
pub fn run_level(problem: &ProblemSpec, degree: usize, level: usize, dt_rule: DtRule) -> Result<LevelRun> {
    if !problem.has_exact() {
        return Err(HdgError::MissingExact(
            problem.members.iter().position(|m| m.exact.is_none()).unwrap_or(0),
        ));
    }
    let n = 1usize << level;
    let mesh = Mesh::uniform_square(n)?;
    let dt = dt_rule.dt(mesh.h_max());
    let mut solver = EnsembleSolver::new(mesh, problem.clone(), SolverOptions::new(degree, dt))?;
    let mut acc = ErrorAccumulator::new();
    let observers: &mut [&mut dyn Observer] = &mut [&mut acc];
    solver.run(observers)?;
    Ok(LevelRun {
        level,
        dt: solver.dt(),
        steps: solver.num_steps(),
        tau: solver.tau(),
        errors: acc.errors(),
        factorizations: solver.stats().factorizations,
    })
}

/// Runs every level in order and collects errors and observed rates.
pub fn convergence_study(
    problem: &ProblemSpec,
    degree: usize,
    levels: &[usize],
    dt_rule: DtRule,
) -> Result<ConvergenceTable> {
    let mut table = ConvergenceTable::default();
    for &level in levels {
        let run = run_level(problem, degree, level, dt_rule)?;
        table.push_level(level, &run.errors);
    }
    Ok(table)
}
