//! Space-time error norms against exact solutions.

use crate::error::{HdgError, Result};
use crate::field::DgField;
use crate::postprocess::Postprocessor;
use crate::problem::ExactSolution;
use crate::reference::eval_at;
use crate::solver::{EnsembleSolver, EnsembleState, Observer};

/// Per-member errors of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MemberErrors {
    /// `sqrt(dt Σ_n ||q(t_n) - q_h^n||²)`.
    pub flux: f64,
    /// `||u(T) - u_h^N||`.
    pub scalar: f64,
    /// `sqrt(dt Σ_n ||u(t_n) - u*_h^n||²)`.
    pub postprocessed: f64,
}

/// Squared element-wise L2 distance between a discrete field and a function,
/// using the solver's data rule.
fn squared_distance<const C: usize>(
    solver: &EnsembleSolver,
    field: &DgField,
    t: f64,
    exact: impl Fn(nalgebra::Point2<f64>, f64) -> [f64; C],
) -> f64 {
    let r = solver.reference();
    let rule = &r.data_rule;
    let table = r.data_tables(field.degree());
    let nd = rule.len();
    let pts = solver.data_points();
    let mut total = 0.0;
    for frame in solver.frames() {
        let e = frame.index;
        let mut local = 0.0;
        for (qp, w) in rule.weights.iter().enumerate() {
            let ex = exact(pts[e * nd + qp], t);
            for (c, v) in ex.iter().enumerate() {
                let d = eval_at(&table.values, field.component(e, c), qp) - v;
                local += w * d * d;
            }
        }
        total += local * frame.geometry.det;
    }
    total
}

/// `||u(t) - u_h||` for one member's scalar field.
pub fn scalar_error(solver: &EnsembleSolver, u: &DgField, exact: &ExactSolution, t: f64) -> f64 {
    squared_distance(solver, u, t, |p, t| [(exact.u)(p, t)]).sqrt()
}

/// `||q(t) - q_h||` for one member's flux.
pub fn flux_error(solver: &EnsembleSolver, q: &DgField, exact: &ExactSolution, t: f64) -> f64 {
    squared_distance(solver, q, t, |p, t| {
        let v = (exact.q)(p, t);
        [v.x, v.y]
    })
    .sqrt()
}

/// Observer accumulating the time-summed flux and postprocessed errors and
/// the final scalar error of every member.
#[derive(Debug, Default)]
pub struct ErrorAccumulator {
    post: Option<Postprocessor>,
    flux_sq: Vec<f64>,
    post_sq: Vec<f64>,
    last: Vec<f64>,
    dt: f64,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn errors(&self) -> Vec<MemberErrors> {
        (0..self.last.len())
            .map(|j| MemberErrors {
                flux: (self.dt * self.flux_sq[j]).sqrt(),
                scalar: self.last[j],
                postprocessed: (self.dt * self.post_sq[j]).sqrt(),
            })
            .collect()
    }
}

impl Observer for ErrorAccumulator {
    fn observe(&mut self, solver: &EnsembleSolver, state: &EnsembleState) -> Result<()> {
        let spec = solver.spec();
        let jn = spec.num_members();
        if self.post.is_none() {
            self.post = Some(Postprocessor::new(solver.frames(), solver.reference())?);
            self.flux_sq = vec![0.0; jn];
            self.post_sq = vec![0.0; jn];
            self.last = vec![0.0; jn];
            self.dt = solver.dt();
        }
        let post = self.post.as_ref().expect("initialized above");
        for (j, m) in spec.members.iter().enumerate() {
            let exact = m.exact.as_ref().ok_or(HdgError::MissingExact(j))?;
            let c = &solver.member_samples(j).expect("sampled before the first step").c;
            let ustar = post.apply(solver.frames(), solver.reference(), &state.q[j], &state.u[j], c);
            self.flux_sq[j] += flux_error(solver, &state.q[j], exact, state.time).powi(2);
            self.post_sq[j] += scalar_error(solver, &ustar, exact, state.time).powi(2);
            if state.step == solver.num_steps() {
                self.last[j] = scalar_error(solver, &state.u[j], exact, state.time);
            }
        }
        Ok(())
    }
}
