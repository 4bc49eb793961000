//! Ensemble problem description: per-member coefficients and data, ensemble
//! means, the admissibility check on the inverse diffusion and the choice of
//! the stabilization constant.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::error::{HdgError, Result};
use crate::mesh::Mesh;
use crate::polybasis::{edge_quadrature, triangle_quadrature};
use crate::reference::{face_reference_point, ElementFrame};

pub type ScalarField = Arc<dyn Fn(Point2<f64>, f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point2<f64>, f64) -> Vector2<f64> + Send + Sync>;
pub type InitialField = Arc<dyn Fn(Point2<f64>) -> f64 + Send + Sync>;

/// Exact scalar and flux, `q = -grad u / c`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub q: VectorField,
}

/// One member of the ensemble:
///
/// ```text
/// c q + grad u = 0,  u_t + div q + β.grad u = f  in Ω,   u = g on ∂Ω,   u(0) = u0
/// ```
#[derive(Clone)]
pub struct Member {
    /// `c`, the inverse diffusion coefficient.
    pub inv_diffusion: ScalarField,
    pub velocity: VectorField,
    pub source: ScalarField,
    pub boundary: ScalarField,
    pub initial: InitialField,
    pub exact: Option<ExactSolution>,
}

impl Member {
    /// Constant coefficients and source, homogeneous boundary and initial data.
    pub fn constant(c: f64, beta: Vector2<f64>, f: f64) -> Self {
        Self {
            inv_diffusion: Arc::new(move |_, _| c),
            velocity: Arc::new(move |_, _| beta),
            source: Arc::new(move |_, _| f),
            boundary: Arc::new(|_, _| 0.0),
            initial: Arc::new(|_| 0.0),
            exact: None,
        }
    }
}

impl fmt::Debug for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Member")
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub members: Vec<Member>,
    pub final_time: f64,
    /// When false, `c_j` and `β_j` are sampled once and the trace matrix is
    /// factorized once per run.
    pub time_dependent_coefficients: bool,
}

impl ProblemSpec {
    pub fn new(members: Vec<Member>, final_time: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(HdgError::InvalidArgument(
                "an ensemble needs at least one member".into(),
            ));
        }
        if !(final_time >= 0.0 && final_time.is_finite()) {
            return Err(HdgError::InvalidArgument(format!(
                "final time {final_time} is not valid"
            )));
        }
        Ok(Self {
            members,
            final_time,
            time_dependent_coefficients: false,
        })
    }

    pub fn with_time_dependent_coefficients(mut self, on: bool) -> Self {
        self.time_dependent_coefficients = on;
        self
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn has_exact(&self) -> bool {
        self.members.iter().all(|m| m.exact.is_some())
    }

    /// Same data restricted to a subset of members.
    pub fn subset(&self, members: &[usize]) -> Result<Self> {
        let picked = members
            .iter()
            .map(|&j| {
                self.members.get(j).cloned().ok_or(HdgError::IndexOutOfRange {
                    what: "member",
                    index: j,
                    len: self.members.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members: picked,
            ..self.clone()
        })
    }
}

/// Pointwise ensemble means `(c̄, β̄)` at `points` and time `t`.
pub fn ensemble_means(spec: &ProblemSpec, points: &[Point2<f64>], t: f64) -> (Vec<f64>, Vec<Vector2<f64>>) {
    let inv = 1.0 / spec.num_members() as f64;
    let mut c = vec![0.0; points.len()];
    let mut beta = vec![Vector2::zeros(); points.len()];
    for m in &spec.members {
        for (i, p) in points.iter().enumerate() {
            c[i] += (m.inv_diffusion)(*p, t);
            beta[i] += (m.velocity)(*p, t);
        }
    }
    c.iter_mut().for_each(|v| *v *= inv);
    beta.iter_mut().for_each(|v| *v *= inv);
    (c, beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// `c_j` is not positive.
    NonPositive,
    /// `|c̄ⁿ - c_jⁿ| >= min(c̄ⁿ, c̄ⁿ⁻¹)`.
    EnsembleSpread,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub member: usize,
    pub step: usize,
    pub point: Point2<f64>,
    pub c_member: f64,
    pub c_mean: f64,
    /// `min(c̄ⁿ, c̄ⁿ⁻¹)`.
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdmissibilityReport {
    /// First violations found, capped at [`AdmissibilityReport::MAX_LISTED`].
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub checked: usize,
    /// Smallest sampled `c_j`.
    pub min_inv_diffusion: f64,
}

impl AdmissibilityReport {
    pub const MAX_LISTED: usize = 64;

    pub fn is_admissible(&self) -> bool {
        self.violation_count == 0
    }

    fn push(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < Self::MAX_LISTED {
            self.violations.push(v);
        }
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_admissible() {
            return write!(
                f,
                "admissible: {} samples checked, min c = {:.6e}",
                self.checked, self.min_inv_diffusion
            );
        }
        writeln!(f, "{} violations in {} samples", self.violation_count, self.checked)?;
        for v in &self.violations {
            match v.kind {
                ViolationKind::NonPositive => writeln!(
                    f,
                    "  member {} step {} at ({:.4}, {:.4}): c = {:.6e} is not positive",
                    v.member + 1,
                    v.step,
                    v.point.x,
                    v.point.y,
                    v.c_member
                )?,
                ViolationKind::EnsembleSpread => writeln!(
                    f,
                    "  member {} step {} at ({:.4}, {:.4}): |{:.6e} - {:.6e}| >= {:.6e}",
                    v.member + 1,
                    v.step,
                    v.point.x,
                    v.point.y,
                    v.c_mean,
                    v.c_member,
                    v.bound
                )?,
            }
        }
        Ok(())
    }
}

/// Element quadrature points of order `2k + 2` over the whole mesh.
fn sample_points(mesh: &Mesh, degree: usize) -> Result<Vec<Point2<f64>>> {
    let rule = triangle_quadrature(2 * degree + 2)?;
    let mut pts = Vec::with_capacity(mesh.num_elements() * rule.len());
    for frame in ElementFrame::all(mesh)? {
        pts.extend(frame.cell_points(&rule));
    }
    Ok(pts)
}

/// Samples the ensemble condition on the inverse diffusion at element
/// quadrature points, at `t = 0` and every time in `times`.
pub fn check_admissibility(
    spec: &ProblemSpec,
    mesh: &Mesh,
    degree: usize,
    times: &[f64],
) -> Result<AdmissibilityReport> {
    let points = sample_points(mesh, degree)?;
    let mut report = AdmissibilityReport {
        min_inv_diffusion: f64::INFINITY,
        ..Default::default()
    };
    let mut grid = vec![0.0];
    if spec.time_dependent_coefficients {
        grid.extend_from_slice(times);
    }
    let mut prev_mean: Option<Vec<f64>> = None;
    for (step, &t) in grid.iter().enumerate() {
        let (mean, _) = ensemble_means(spec, &points, t);
        for (j, m) in spec.members.iter().enumerate() {
            for (i, p) in points.iter().enumerate() {
                let cj = (m.inv_diffusion)(*p, t);
                report.checked += 1;
                report.min_inv_diffusion = report.min_inv_diffusion.min(cj);
                let bound = prev_mean.as_ref().map_or(mean[i], |pm| mean[i].min(pm[i]));
                let base = Violation {
                    kind: ViolationKind::NonPositive,
                    member: j,
                    step,
                    point: *p,
                    c_member: cj,
                    c_mean: mean[i],
                    bound,
                };
                if !(cj > 0.0) {
                    report.push(base);
                }
                if !((mean[i] - cj).abs() < bound) {
                    report.push(Violation {
                        kind: ViolationKind::EnsembleSpread,
                        ..base
                    });
                }
            }
        }
        prev_mean = Some(mean);
    }
    Ok(report)
}

/// Sample locations for velocity bounds on one element: vertices, face
/// quadrature points and cell quadrature points of the element and of its
/// uniform refinements by two and four.
fn velocity_samples(frame: &ElementFrame, degree: usize) -> Result<Vec<Point2<f64>>> {
    let cell = triangle_quadrature(2 * degree + 2)?;
    let edge = edge_quadrature(2 * degree + 2)?;
    let mut pts: Vec<Point2<f64>> = frame.geometry.vertices.to_vec();
    for f in 0..3 {
        pts.extend(frame.face_points(f, &edge));
    }
    for level in 0..3u32 {
        let m = 1usize << level;
        let s = 1.0 / m as f64;
        for i in 0..m {
            for j in 0..m - i {
                let corners = [
                    [i as f64 * s, j as f64 * s],
                    [(i + 1) as f64 * s, j as f64 * s],
                    [i as f64 * s, (j + 1) as f64 * s],
                ];
                let mut sub = vec![corners];
                if i + j + 1 < m {
                    sub.push([[(i + 1) as f64 * s, (j + 1) as f64 * s], corners[2], corners[1]]);
                }
                for c in sub {
                    for p in &cell.points {
                        let x = c[0][0] + p[0] * (c[1][0] - c[0][0]) + p[1] * (c[2][0] - c[0][0]);
                        let y = c[0][1] + p[0] * (c[1][1] - c[0][1]) + p[1] * (c[2][1] - c[0][1]);
                        pts.push(frame.geometry.map([x, y]));
                    }
                }
            }
        }
    }
    Ok(pts)
}

/// `τ = 1 + max_j sup |β_j|_∞` over sampled points and times, raised if
/// needed so that `min_j (τ + β_j.n / 2) >= max_j |β_j|_∞ / 2` holds at every
/// sampled face point.
pub fn choose_tau(spec: &ProblemSpec, mesh: &Mesh, degree: usize, times: &[f64]) -> Result<f64> {
    let mut grid = vec![0.0];
    if spec.time_dependent_coefficients {
        grid.extend_from_slice(times);
    }
    let frames = ElementFrame::all(mesh)?;
    let mut bound: f64 = 0.0;
    for frame in &frames {
        let pts = velocity_samples(frame, degree)?;
        for &t in &grid {
            for m in &spec.members {
                for p in &pts {
                    let b = (m.velocity)(*p, t);
                    bound = bound.max(b.x.abs().max(b.y.abs()));
                }
            }
        }
    }
    if !bound.is_finite() {
        return Err(HdgError::InvalidArgument("velocity samples are not finite".into()));
    }
    let mut tau = 1.0 + bound;
    let edge = edge_quadrature(2 * degree + 2)?;
    for frame in &frames {
        for f in 0..3 {
            let n = frame.normal(f);
            for &s in &edge.points {
                let xi = face_reference_point(f, frame.flipped[f], s);
                let p = frame.geometry.map(xi);
                for &t in &grid {
                    for m in &spec.members {
                        let needed = 0.5 * bound - 0.5 * (m.velocity)(p, t).dot(&n);
                        tau = tau.max(needed);
                    }
                }
            }
        }
    }
    Ok(tau)
}
