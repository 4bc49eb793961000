//! Wall-clock comparison of one ensemble run against separate single-member runs.

use std::time::Instant;

use crate::error::Result;
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::solver::{EnsembleSolver, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub members: usize,
    pub steps: usize,
    pub ensemble_seconds: f64,
    /// One entry per member.
    pub separate_seconds: Vec<f64>,
    pub ensemble_factorizations: usize,
    pub separate_factorizations: usize,
}

impl BenchReport {
    /// Ensemble time over the summed time of the separate runs.
    pub fn ratio(&self) -> f64 {
        self.ensemble_seconds / self.separate_seconds.iter().sum::<f64>()
    }
}

fn timed_run(mesh: &Mesh, problem: ProblemSpec, options: &SolverOptions) -> Result<(f64, usize, usize)> {
    let start = Instant::now();
    let mut solver = EnsembleSolver::new(mesh.clone(), problem, options.clone())?;
    solver.run(&mut [])?;
    Ok((
        start.elapsed().as_secs_f64(),
        solver.stats().factorizations,
        solver.num_steps(),
    ))
}

/// Times setup plus time stepping, without error evaluation, for the whole
/// ensemble and for each member alone. The stabilization constant of the
/// ensemble run is used for every run so that all systems match in size and
/// conditioning.
pub fn benchmark_ensemble_vs_separate(
    problem: &ProblemSpec,
    degree: usize,
    level: usize,
    dt: f64,
    final_time: f64,
) -> Result<BenchReport> {
    let mesh = Mesh::uniform_square(1 << level)?;
    let mut problem = problem.clone();
    problem.final_time = final_time;
    let probe = EnsembleSolver::new(mesh.clone(), problem.clone(), SolverOptions::new(degree, dt))?;
    let mut options = SolverOptions::new(degree, dt);
    options.tau = Some(probe.tau());
    drop(probe);

    let (ensemble_seconds, ensemble_factorizations, steps) = timed_run(&mesh, problem.clone(), &options)?;
    let mut separate_seconds = Vec::new();
    let mut separate_factorizations = 0;
    for j in 0..problem.num_members() {
        let (secs, facts, _) = timed_run(&mesh, problem.subset(&[j])?, &options)?;
        separate_seconds.push(secs);
        separate_factorizations += facts;
    }
    Ok(BenchReport {
        members: problem.num_members(),
        steps,
        ensemble_seconds,
        separate_seconds,
        ensemble_factorizations,
        separate_factorizations,
    })
}
