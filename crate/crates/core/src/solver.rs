//! Ensemble time stepping: one trace matrix built from the ensemble means,
//! one factorization shared by all members, one right-hand side per member.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::error::{HdgError, Result};
use crate::field::DgField;
use crate::hdg_local::{
    assemble_local_blocks, condense, local_rhs, BlockLayout, CondensedElement, ElementCoefficients, LocalRhsInput,
};
use crate::mesh::Mesh;
use crate::problem::{check_admissibility, choose_tau, AdmissibilityReport, ProblemSpec};
use crate::reference::{physical_gradients, ElementFrame, ReferenceElement};
use crate::sparse_linalg::{assemble_trace_matrix, relative_residual, SolverBackend, TraceDofMap, TraceSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub degree: usize,
    pub dt: f64,
    /// Overrides the automatic choice of the stabilization constant.
    pub tau: Option<f64>,
    pub backend: SolverBackend,
    /// Refuse to run when the ensemble condition fails.
    pub strict_admissibility: bool,
    /// Relative trace residual accepted after each solve.
    pub residual_tolerance: f64,
}

impl SolverOptions {
    pub fn new(degree: usize, dt: f64) -> Self {
        Self {
            degree,
            dt,
            tau: None,
            backend: SolverBackend::default(),
            strict_admissibility: false,
            residual_tolerance: 1e-10,
        }
    }
}

/// Number of steps and the step size actually used: `N = T / dt` when that
/// is an integer up to rounding, `ceil(T / dt)` otherwise, and `dt = T / N`.
pub fn snap_time_step(final_time: f64, dt: f64) -> Result<(f64, usize)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HdgError::InvalidArgument(format!("time step {dt} must be positive")));
    }
    if final_time == 0.0 {
        return Ok((dt, 0));
    }
    let ratio = final_time / dt;
    let nearest = ratio.round();
    let steps = if nearest >= 1.0 && (ratio - nearest).abs() <= 1e-9 * ratio {
        nearest
    } else {
        ratio.ceil()
    };
    Ok((final_time / steps, steps as usize))
}

/// Coefficient samples over the mesh: `c` and `β` at operator cell points,
/// `β` at operator face points, element-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientSamples {
    pub c: Vec<f64>,
    pub beta_cell: Vec<Vector2<f64>>,
    pub beta_face: Vec<Vector2<f64>>,
}

impl CoefficientSamples {
    fn view(&self, e: usize, nq: usize, nqf: usize) -> ElementCoefficients<'_> {
        ElementCoefficients {
            c: &self.c[e * nq..(e + 1) * nq],
            beta_cell: &self.beta_cell[e * nq..(e + 1) * nq],
            beta_face: &self.beta_face[e * 3 * nqf..(e + 1) * 3 * nqf],
        }
    }
}

/// Discrete solution of every member at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub step: usize,
    pub time: f64,
    /// Flux, two components in `P^k`.
    pub q: Vec<DgField>,
    /// Scalar in `P^k`, or `P^{k+1}` at the initial level.
    pub u: Vec<DgField>,
    /// Interior-face traces; empty at the initial level.
    pub trace: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub factorizations: usize,
    pub solved_columns: usize,
    pub max_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// Address of the factorization used; equal across steps iff reused.
    pub system_id: usize,
    pub members: usize,
    pub residual: f64,
    pub refactorized: bool,
}

/// Receives every accepted time level `n >= 1`.
pub trait Observer {
    fn observe(&mut self, solver: &EnsembleSolver, state: &EnsembleState) -> Result<()>;
}

impl<F: FnMut(&EnsembleSolver, &EnsembleState) -> Result<()>> Observer for F {
    fn observe(&mut self, solver: &EnsembleSolver, state: &EnsembleState) -> Result<()> {
        self(solver, state)
    }
}

struct Operator {
    condensed: Vec<CondensedElement>,
    system: Arc<TraceSystem>,
}

pub struct EnsembleSolver {
    mesh: Mesh,
    spec: ProblemSpec,
    reference: ReferenceElement,
    frames: Vec<ElementFrame>,
    dofs: TraceDofMap,
    options: SolverOptions,
    tau: f64,
    steps: usize,
    admissibility: AdmissibilityReport,
    cell_points: Vec<Point2<f64>>,
    face_points: Vec<Point2<f64>>,
    data_points: Vec<Point2<f64>>,
    data_face_points: Vec<Point2<f64>>,
    members: Vec<CoefficientSamples>,
    mean: CoefficientSamples,
    sampled: bool,
    fingerprint: u64,
    operator: Option<Operator>,
    stats: SolverStats,
    local: Vec<f64>,
}

impl std::fmt::Debug for EnsembleSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleSolver")
            .field("elements", &self.mesh.num_elements())
            .field("members", &self.spec.num_members())
            .field("degree", &self.options.degree)
            .field("dt", &self.options.dt)
            .field("tau", &self.tau)
            .finish_non_exhaustive()
    }
}

impl EnsembleSolver {
    /// `options.dt` is snapped so that the final time is a whole number of steps.
    pub fn new(mesh: Mesh, spec: ProblemSpec, mut options: SolverOptions) -> Result<Self> {
        let reference = ReferenceElement::new(options.degree)?;
        let (dt, steps) = snap_time_step(spec.final_time, options.dt)?;
        options.dt = dt;
        let times: Vec<f64> = (1..=steps).map(|n| n as f64 * dt).collect();
        let admissibility = check_admissibility(&spec, &mesh, options.degree, &times)?;
        if options.strict_admissibility && !admissibility.is_admissible() {
            return Err(HdgError::Inadmissible(admissibility.to_string()));
        }
        let tau = match options.tau {
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => return Err(HdgError::InvalidArgument(format!("stabilization {t} must be positive"))),
            None => choose_tau(&spec, &mesh, options.degree, &times)?,
        };
        let frames = ElementFrame::all(&mesh)?;
        let mut cell_points = Vec::new();
        let mut face_points = Vec::new();
        let mut data_points = Vec::new();
        let mut data_face_points = Vec::new();
        for frame in &frames {
            cell_points.extend(frame.cell_points(&reference.cell_rule));
            data_points.extend(frame.cell_points(&reference.data_rule));
            for f in 0..3 {
                face_points.extend(frame.face_points(f, &reference.face_rule));
                data_face_points.extend(frame.face_points(f, &reference.data_face_rule));
            }
        }
        let dofs = TraceDofMap::new(&mesh, reference.face_dim());
        let local = vec![0.0; spec.num_members() * frames.len() * BlockLayout::new(&reference).total()];
        Ok(Self {
            mesh,
            spec,
            reference,
            frames,
            dofs,
            options,
            tau,
            steps,
            admissibility,
            cell_points,
            face_points,
            data_points,
            data_face_points,
            members: Vec::new(),
            mean: CoefficientSamples::default(),
            sampled: false,
            fingerprint: 0,
            operator: None,
            stats: SolverStats::default(),
            local,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    pub fn frames(&self) -> &[ElementFrame] {
        &self.frames
    }

    pub fn dofs(&self) -> &TraceDofMap {
        &self.dofs
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn dt(&self) -> f64 {
        self.options.dt
    }

    pub fn num_steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn admissibility(&self) -> &AdmissibilityReport {
        &self.admissibility
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn system(&self) -> Option<&Arc<TraceSystem>> {
        self.operator.as_ref().map(|o| &o.system)
    }

    pub fn condensed(&self) -> Option<&[CondensedElement]> {
        self.operator.as_ref().map(|o| o.condensed.as_slice())
    }

    /// Physical data-rule points, element-major.
    pub fn data_points(&self) -> &[Point2<f64>] {
        &self.data_points
    }

    /// Physical operator-rule points, element-major.
    pub fn cell_points(&self) -> &[Point2<f64>] {
        &self.cell_points
    }

    /// Member coefficient samples at the current time level.
    pub fn member_samples(&self, member: usize) -> Option<&CoefficientSamples> {
        self.members.get(member)
    }

    pub fn mean_samples(&self) -> &CoefficientSamples {
        &self.mean
    }

    /// Samples coefficients at `t`; a no-op after the first call for
    /// autonomous problems.
    pub fn sample_coefficients(&mut self, t: f64) {
        if self.sampled && !self.spec.time_dependent_coefficients {
            return;
        }
        let inv = 1.0 / self.spec.num_members() as f64;
        let mut mean = CoefficientSamples {
            c: vec![0.0; self.cell_points.len()],
            beta_cell: vec![Vector2::zeros(); self.cell_points.len()],
            beta_face: vec![Vector2::zeros(); self.face_points.len()],
        };
        self.members = self
            .spec
            .members
            .iter()
            .map(|m| CoefficientSamples {
                c: self.cell_points.iter().map(|p| (m.inv_diffusion)(*p, t)).collect(),
                beta_cell: self.cell_points.iter().map(|p| (m.velocity)(*p, t)).collect(),
                beta_face: self.face_points.iter().map(|p| (m.velocity)(*p, t)).collect(),
            })
            .collect();
        for s in &self.members {
            mean.c.iter_mut().zip(&s.c).for_each(|(a, b)| *a += b);
            mean.beta_cell.iter_mut().zip(&s.beta_cell).for_each(|(a, b)| *a += b);
            mean.beta_face.iter_mut().zip(&s.beta_face).for_each(|(a, b)| *a += b);
        }
        mean.c.iter_mut().for_each(|v| *v *= inv);
        mean.beta_cell.iter_mut().for_each(|v| *v *= inv);
        mean.beta_face.iter_mut().for_each(|v| *v *= inv);
        self.mean = mean;
        self.fingerprint = self.compute_fingerprint();
        self.sampled = true;
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.options.degree.hash(&mut h);
        self.options.dt.to_bits().hash(&mut h);
        self.tau.to_bits().hash(&mut h);
        self.mesh.elements().hash(&mut h);
        for v in self.mesh.vertices() {
            v.x.to_bits().hash(&mut h);
            v.y.to_bits().hash(&mut h);
        }
        for c in &self.mean.c {
            c.to_bits().hash(&mut h);
        }
        for b in self.mean.beta_cell.iter().chain(&self.mean.beta_face) {
            b.x.to_bits().hash(&mut h);
            b.y.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn rebuild_operator(&mut self) -> Result<()> {
        let nq = self.reference.cell_rule.len();
        let nqf = self.reference.face_rule.len();
        let condensed = self
            .frames
            .iter()
            .map(|frame| {
                let blocks = assemble_local_blocks(
                    frame,
                    &self.reference,
                    self.mean.view(frame.index, nq, nqf),
                    self.tau,
                    self.options.dt,
                )?;
                condense(&blocks)
            })
            .collect::<Result<Vec<_>>>()?;
        let matrix = assemble_trace_matrix(&self.frames, &condensed, &self.dofs);
        let system = TraceSystem::factorize(matrix, self.options.backend, self.fingerprint)?;
        self.stats.factorizations += 1;
        self.operator = Some(Operator {
            condensed,
            system: Arc::new(system),
        });
        Ok(())
    }

    /// Initial level: `u = Π_{k+1} u0` and `q = Π_k(-grad u / c(·, 0))`.
    pub fn initialize(&mut self) -> Result<EnsembleState> {
        let k = self.options.degree;
        let r = &self.reference;
        let nd = r.data_rule.len();
        let up = &r.data_up;
        let tab = &r.data;
        let ne = self.frames.len();
        let mut qs = Vec::new();
        let mut us = Vec::new();
        let mut grads = vec![[0.0; 2]; r.dim_up()];
        for m in &self.spec.members {
            let mut u = DgField::zeros(ne, k + 1, 1);
            let mut q = DgField::zeros(ne, k, 2);
            for frame in &self.frames {
                let e = frame.index;
                let pts = &self.data_points[e * nd..(e + 1) * nd];
                let ue = u.element_mut(e);
                for (qp, w) in r.data_rule.weights.iter().enumerate() {
                    let v = w * (m.initial)(pts[qp]);
                    for (a, c) in ue.iter_mut().enumerate() {
                        *c += v * up.values[(a, qp)];
                    }
                }
                let ue = u.element(e).to_vec();
                let qe = q.element_mut(e);
                let nk = r.dim();
                for (qp, w) in r.data_rule.weights.iter().enumerate() {
                    physical_gradients(up, &frame.geometry, qp, &mut grads);
                    let (mut gx, mut gy) = (0.0, 0.0);
                    for (a, c) in ue.iter().enumerate() {
                        gx += c * grads[a][0];
                        gy += c * grads[a][1];
                    }
                    let s = -w / (m.inv_diffusion)(pts[qp], 0.0);
                    for a in 0..nk {
                        qe[a] += s * gx * tab.values[(a, qp)];
                        qe[nk + a] += s * gy * tab.values[(a, qp)];
                    }
                }
            }
            qs.push(q);
            us.push(u);
        }
        Ok(EnsembleState {
            step: 0,
            time: 0.0,
            q: qs,
            u: us,
            trace: Vec::new(),
        })
    }

    /// Advances every member by one step.
    pub fn step(&mut self, prev: &EnsembleState) -> Result<(EnsembleState, StepReport)> {
        let jn = self.spec.num_members();
        if prev.q.len() != jn || prev.u.len() != jn {
            return Err(HdgError::DimensionMismatch {
                expected: jn,
                found: prev.u.len(),
            });
        }
        let n = prev.step + 1;
        let t = n as f64 * self.options.dt;
        self.sample_coefficients(t);
        let refactorized = match &self.operator {
            Some(op) if op.system.fingerprint() == self.fingerprint => false,
            _ => {
                self.rebuild_operator()?;
                true
            }
        };
        let op = self.operator.as_ref().expect("operator built above");
        let r = &self.reference;
        let layout = BlockLayout::new(r);
        let (nk, total, nt) = (layout.modes, layout.total(), layout.trace());
        let m = layout.face_modes;
        let nq = r.cell_rule.len();
        let nqf = r.face_rule.len();
        let nd = r.data_rule.len();
        let ndf = r.data_face_rule.len();
        let ndof = self.dofs.len();
        let ne = self.frames.len();

        let mut rhs = vec![0.0; ndof * jn];
        let mut reduced = vec![0.0; nt];
        let mut source = vec![0.0; nd];
        let mut gvals = vec![vec![0.0; ndf]; 3];
        for (j, member) in self.spec.members.iter().enumerate() {
            let samples = &self.members[j];
            let column = &mut rhs[j * ndof..(j + 1) * ndof];
            for frame in &self.frames {
                let e = frame.index;
                for (s, p) in source.iter_mut().zip(&self.data_points[e * nd..(e + 1) * nd]) {
                    *s = (member.source)(*p, t);
                }
                for f in 0..3 {
                    if frame.boundary[f] {
                        let pts = &self.data_face_points[(3 * e + f) * ndf..(3 * e + f + 1) * ndf];
                        for (g, p) in gvals[f].iter_mut().zip(pts) {
                            *g = (member.boundary)(*p, t);
                        }
                    }
                }
                let input = LocalRhsInput {
                    source: &source,
                    boundary: std::array::from_fn(|f| frame.boundary[f].then(|| gvals[f].as_slice())),
                    prev_q: prev.q[j].element(e),
                    prev_u: prev.u[j].element(e),
                    prev_u_degree: prev.u[j].degree(),
                    member: samples.view(e, nq, nqf),
                    mean: self.mean.view(e, nq, nqf),
                    tau: self.tau,
                    dt: self.options.dt,
                };
                let out = &mut self.local[(j * ne + e) * total..(j * ne + e + 1) * total];
                local_rhs(frame, r, &input, out);
                op.condensed[e].reduce_rhs(out, &mut reduced);
                for f in 0..3 {
                    if let Some(off) = self.dofs.face_offset(frame.faces[f]) {
                        for a in 0..m {
                            column[off + a] += reduced[f * m + a];
                        }
                    }
                }
            }
        }

        let b = rhs.clone();
        op.system.solve_multi(&mut rhs, jn, self.fingerprint)?;
        let residual = relative_residual(op.system.matrix(), &rhs, &b);
        if !(residual <= self.options.residual_tolerance) {
            return Err(HdgError::SingularMatrix(format!(
                "trace residual {residual:.3e} exceeds {:.1e} at step {n}",
                self.options.residual_tolerance
            )));
        }

        let k = self.options.degree;
        let mut qs = Vec::with_capacity(jn);
        let mut us = Vec::with_capacity(jn);
        let mut local_trace = vec![0.0; nt];
        let mut interior = vec![0.0; layout.interior()];
        for j in 0..jn {
            let column = &rhs[j * ndof..(j + 1) * ndof];
            let mut q = DgField::zeros(ne, k, 2);
            let mut u = DgField::zeros(ne, k, 1);
            for frame in &self.frames {
                let e = frame.index;
                for f in 0..3 {
                    let dst = &mut local_trace[f * m..(f + 1) * m];
                    match self.dofs.face_offset(frame.faces[f]) {
                        Some(off) => dst.copy_from_slice(&column[off..off + m]),
                        None => dst.fill(0.0),
                    }
                }
                let local = &self.local[(j * ne + e) * total..(j * ne + e + 1) * total];
                op.condensed[e].recover_interior(&local_trace, local, &mut interior);
                q.element_mut(e).copy_from_slice(&interior[..2 * nk]);
                u.element_mut(e).copy_from_slice(&interior[2 * nk..]);
            }
            qs.push(q);
            us.push(u);
        }
        let traces = (0..jn).map(|j| rhs[j * ndof..(j + 1) * ndof].to_vec()).collect();

        self.stats.steps += 1;
        self.stats.solved_columns += jn;
        self.stats.max_residual = self.stats.max_residual.max(residual);
        let report = StepReport {
            step: n,
            system_id: Arc::as_ptr(&op.system) as usize,
            members: jn,
            residual,
            refactorized,
        };
        Ok((
            EnsembleState {
                step: n,
                time: t,
                q: qs,
                u: us,
                trace: traces,
            },
            report,
        ))
    }

    /// Runs all steps to the final time, calling every observer after each.
    pub fn run(&mut self, observers: &mut [&mut dyn Observer]) -> Result<EnsembleState> {
        let mut state = self.initialize()?;
        for _ in 0..self.steps {
            let (next, _) = self.step(&state)?;
            state = next;
            for obs in observers.iter_mut() {
                obs.observe(self, &state)?;
            }
        }
        Ok(state)
    }
}
