//! Element-local pieces of the ensemble HDG scheme.
//!
//! Local unknown order is `[q_x, q_y, u, û_0, û_1, û_2]`: the two flux
//! components and the scalar in `P^k(K)`, then `k + 1` trace modes per local
//! face in the orientation of the stored mesh face. The rows follow the same
//! order with test functions `(r, v, v̂)`.
//!
//! Implicit part, per element (`c̄`, `β̄` ensemble means):
//!
//! ```text
//! (c̄ q, r) - (u, div r) + <û, r.n>
//! (u/dt, v) + (div q, v) + (β̄.grad u, v) + <τ(u - û), v>
//! -<q.n, v̂> - <β̄.n u, v̂> - <τ(u - û), v̂>
//! ```
//!
//! Boundary faces carry no trace unknowns; their `û` columns and `v̂` rows are
//! present locally but never enter the global system.

use nalgebra::{DMatrix, Vector2};

use crate::error::{HdgError, Result};
use crate::reference::{physical_gradients, ElementFrame, ReferenceElement};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    /// `dim P^k`.
    pub modes: usize,
    /// `k + 1`.
    pub face_modes: usize,
}

impl BlockLayout {
    pub fn new(reference: &ReferenceElement) -> Self {
        Self {
            modes: reference.dim(),
            face_modes: reference.face_dim(),
        }
    }

    pub fn q_len(&self) -> usize {
        2 * self.modes
    }

    pub fn u_offset(&self) -> usize {
        2 * self.modes
    }

    pub fn interior(&self) -> usize {
        3 * self.modes
    }

    pub fn trace(&self) -> usize {
        3 * self.face_modes
    }

    pub fn total(&self) -> usize {
        self.interior() + self.trace()
    }

    pub fn trace_offset(&self, face: usize) -> usize {
        self.interior() + face * self.face_modes
    }
}

/// Coefficient samples of one element: `c` and `β` at operator cell points,
/// `β` at operator face points (three faces, global face parameter order).
#[derive(Clone, Copy, Debug)]
pub struct ElementCoefficients<'a> {
    pub c: &'a [f64],
    pub beta_cell: &'a [Vector2<f64>],
    pub beta_face: &'a [Vector2<f64>],
}

/// Dense local saddle-point matrix of one element.
#[derive(Clone, Debug)]
pub struct LocalBlocks {
    pub element: usize,
    pub layout: BlockLayout,
    pub matrix: DMatrix<f64>,
}

impl LocalBlocks {
    fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> DMatrix<f64> {
        self.matrix.view((rows.0, cols.0), (rows.1, cols.1)).into_owned()
    }

    fn q(&self) -> (usize, usize) {
        (0, self.layout.q_len())
    }

    fn u(&self) -> (usize, usize) {
        (self.layout.u_offset(), self.layout.modes)
    }

    fn t(&self) -> (usize, usize) {
        (self.layout.interior(), self.layout.trace())
    }

    /// `(c̄ q, r)`.
    pub fn a_qq(&self) -> DMatrix<f64> {
        self.block(self.q(), self.q())
    }

    /// `-(u, div r)`.
    pub fn b_qu(&self) -> DMatrix<f64> {
        self.block(self.q(), self.u())
    }

    /// `<û, r.n>`.
    pub fn c_qt(&self) -> DMatrix<f64> {
        self.block(self.q(), self.t())
    }

    /// `(div q, v)`.
    pub fn d_uq(&self) -> DMatrix<f64> {
        self.block(self.u(), self.q())
    }

    /// Time, convection and stabilization terms on `(u, v)`.
    pub fn m_uu(&self) -> DMatrix<f64> {
        self.block(self.u(), self.u())
    }

    pub fn m_ut(&self) -> DMatrix<f64> {
        self.block(self.u(), self.t())
    }

    pub fn m_tq(&self) -> DMatrix<f64> {
        self.block(self.t(), self.q())
    }

    pub fn m_tu(&self) -> DMatrix<f64> {
        self.block(self.t(), self.u())
    }

    pub fn m_tt(&self) -> DMatrix<f64> {
        self.block(self.t(), self.t())
    }

    /// Interior `(q, u) x (q, u)` sub-matrix.
    pub fn interior(&self) -> DMatrix<f64> {
        let n = self.layout.interior();
        self.block((0, n), (0, n))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HdgError::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// Left-hand side of the scheme restricted to one element.
pub fn assemble_local_blocks(
    frame: &ElementFrame,
    reference: &ReferenceElement,
    mean: ElementCoefficients<'_>,
    tau: f64,
    dt: f64,
) -> Result<LocalBlocks> {
    check_positive("stabilization", tau)?;
    check_positive("time step", dt)?;
    if let Some(bad) = mean.c.iter().find(|c| !(**c > 0.0)) {
        return Err(HdgError::CoefficientViolation {
            element: frame.index,
            detail: format!("ensemble-mean inverse diffusion {bad} is not positive"),
        });
    }
    let layout = BlockLayout::new(reference);
    let nk = layout.modes;
    let m = layout.face_modes;
    let ui = layout.u_offset();
    let mut mat = DMatrix::zeros(layout.total(), layout.total());
    let geom = &frame.geometry;

    let rule = &reference.cell_rule;
    let tab = &reference.cell;
    let mut grads = vec![[0.0; 2]; nk];
    for (qp, w) in rule.weights.iter().enumerate() {
        let wd = w * geom.det;
        let c = mean.c[qp];
        let beta = mean.beta_cell[qp];
        physical_gradients(tab, geom, qp, &mut grads);
        for a in 0..nk {
            let va = tab.values[(a, qp)];
            for b in 0..nk {
                let vb = tab.values[(b, qp)];
                let mass = wd * va * vb;
                mat[(a, b)] += c * mass;
                mat[(nk + a, nk + b)] += c * mass;
                for d in 0..2 {
                    mat[(d * nk + a, ui + b)] -= wd * vb * grads[a][d];
                    mat[(ui + a, d * nk + b)] += wd * grads[b][d] * va;
                }
                let adv = beta.x * grads[b][0] + beta.y * grads[b][1];
                mat[(ui + a, ui + b)] += mass / dt + wd * adv * va;
            }
        }
    }

    let frule = &reference.face_rule;
    let nqf = frule.len();
    for f in 0..3 {
        let ftab = reference.face.get(f, frame.flipped[f]);
        let n = frame.normal(f);
        let len = geom.face_lengths[f];
        let to = layout.trace_offset(f);
        for (s, w) in frule.weights.iter().enumerate() {
            let wl = w * len;
            let bn = mean.beta_face[f * nqf + s].dot(&n);
            for a in 0..nk {
                let va = ftab.values[(a, s)];
                for b in 0..nk {
                    mat[(ui + a, ui + b)] += wl * tau * va * ftab.values[(b, s)];
                }
                for j in 0..m {
                    let psi = reference.trace.values[(j, s)];
                    mat[(a, to + j)] += wl * psi * va * n.x;
                    mat[(nk + a, to + j)] += wl * psi * va * n.y;
                    mat[(ui + a, to + j)] -= wl * tau * psi * va;
                    mat[(to + j, a)] -= wl * va * n.x * psi;
                    mat[(to + j, nk + a)] -= wl * va * n.y * psi;
                    mat[(to + j, ui + a)] -= wl * (bn + tau) * va * psi;
                }
            }
            for i in 0..m {
                for j in 0..m {
                    mat[(to + i, to + j)] += wl * tau * reference.trace.values[(i, s)] * reference.trace.values[(j, s)];
                }
            }
        }
    }
    Ok(LocalBlocks {
        element: frame.index,
        layout,
        matrix: mat,
    })
}

/// Static condensation of one element onto its trace unknowns.
#[derive(Clone, Debug)]
pub struct CondensedElement {
    pub element: usize,
    pub layout: BlockLayout,
    /// `S = A_tt - A_ti A_ii^{-1} A_it`.
    pub schur: DMatrix<f64>,
    /// `A_ii^{-1} A_it`: interior response to a unit trace.
    pub lift: DMatrix<f64>,
    /// `A_ii^{-1}`.
    pub interior_inverse: DMatrix<f64>,
    /// `A_ti A_ii^{-1}`: reduces a local right-hand side to trace rows.
    pub rhs_reduction: DMatrix<f64>,
}

pub fn condense(blocks: &LocalBlocks) -> Result<CondensedElement> {
    let layout = blocks.layout;
    let ni = layout.interior();
    let nt = layout.trace();
    let a_ii = blocks.matrix.view((0, 0), (ni, ni)).into_owned();
    let a_it = blocks.matrix.view((0, ni), (ni, nt));
    let a_ti = blocks.matrix.view((ni, 0), (nt, ni));
    let a_tt = blocks.matrix.view((ni, ni), (nt, nt));
    let singular = || HdgError::SingularLocal {
        element: blocks.element,
        what: "interior (q, u) block",
    };
    let interior_inverse = a_ii.lu().try_inverse().ok_or_else(singular)?;
    if interior_inverse.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let lift = &interior_inverse * a_it;
    let rhs_reduction = a_ti * &interior_inverse;
    let schur = a_tt - a_ti * &lift;
    Ok(CondensedElement {
        element: blocks.element,
        layout,
        schur,
        lift,
        interior_inverse,
        rhs_reduction,
    })
}

impl CondensedElement {
    /// Trace rows of the condensed right-hand side: `b_t - A_ti A_ii^{-1} b_i`.
    pub fn reduce_rhs(&self, rhs: &[f64], out: &mut [f64]) {
        let ni = self.layout.interior();
        let nt = self.layout.trace();
        for (r, o) in out.iter_mut().enumerate().take(nt) {
            let mut acc = rhs[ni + r];
            for c in 0..ni {
                acc -= self.rhs_reduction[(r, c)] * rhs[c];
            }
            *o = acc;
        }
    }

    /// Interior unknowns from the element's trace values and its local
    /// right-hand side: `A_ii^{-1} (b_i - A_it û)`.
    pub fn recover_interior(&self, trace: &[f64], rhs: &[f64], out: &mut [f64]) {
        let ni = self.layout.interior();
        let nt = self.layout.trace();
        for (r, o) in out.iter_mut().enumerate().take(ni) {
            let mut acc = 0.0;
            for c in 0..ni {
                acc += self.interior_inverse[(r, c)] * rhs[c];
            }
            for c in 0..nt {
                acc -= self.lift[(r, c)] * trace[c];
            }
            *o = acc;
        }
    }
}

/// Per-member data for one element's right-hand side.
#[derive(Clone, Copy, Debug)]
pub struct LocalRhsInput<'a> {
    /// `f_j^n` at data-rule cell points.
    pub source: &'a [f64],
    /// `g_j^n` at data-rule face points, for boundary faces only.
    pub boundary: [Option<&'a [f64]>; 3],
    /// Previous flux coefficients, `[q_x, q_y]` in `P^k`.
    pub prev_q: &'a [f64],
    /// Previous scalar coefficients in `P^k` or `P^{k+1}`.
    pub prev_u: &'a [f64],
    pub prev_u_degree: usize,
    pub member: ElementCoefficients<'a>,
    pub mean: ElementCoefficients<'a>,
    pub tau: f64,
    pub dt: f64,
}

/// Right-hand side of the scheme for one member on one element:
///
/// ```text
/// r : ((c̄ - c_j) q^{n-1}, r) - <g, r.n>_∂Ω
/// v : (f, v) + (u^{n-1}/dt, v) + <τ g, v>_∂Ω + ((β̄ - β_j).grad u^{n-1}, v)
/// v̂ : -<(β̄ - β_j).n u^{n-1}, v̂>
/// ```
pub fn local_rhs(frame: &ElementFrame, reference: &ReferenceElement, input: &LocalRhsInput<'_>, out: &mut [f64]) {
    let layout = BlockLayout::new(reference);
    let nk = layout.modes;
    let ui = layout.u_offset();
    let m = layout.face_modes;
    let geom = &frame.geometry;
    out[..layout.total()].iter_mut().for_each(|v| *v = 0.0);

    let rule = &reference.data_rule;
    let tab = &reference.data;
    for (qp, w) in rule.weights.iter().enumerate() {
        let wf = w * geom.det * input.source[qp];
        for a in 0..nk {
            out[ui + a] += wf * tab.values[(a, qp)];
        }
    }

    let frule = &reference.data_face_rule;
    for f in 0..3 {
        let Some(g) = input.boundary[f] else { continue };
        let ftab = reference.data_face.get(f, frame.flipped[f]);
        let n = frame.normal(f);
        let len = geom.face_lengths[f];
        for (s, w) in frule.weights.iter().enumerate() {
            let wg = w * len * g[s];
            for a in 0..nk {
                let va = ftab.values[(a, s)];
                out[a] -= wg * va * n.x;
                out[nk + a] -= wg * va * n.y;
                out[ui + a] += input.tau * wg * va;
            }
        }
    }

    let pdeg = input.prev_u_degree;
    let rule = &reference.cell_rule;
    let tab = &reference.cell;
    let utab = reference.cell_tables(pdeg);
    let pdim = utab.dim;
    let mut ugrads = vec![[0.0; 2]; pdim];
    for (qp, w) in rule.weights.iter().enumerate() {
        let wd = w * geom.det;
        let dc = input.mean.c[qp] - input.member.c[qp];
        let db = input.mean.beta_cell[qp] - input.member.beta_cell[qp];
        let u: f64 = (0..pdim).map(|b| input.prev_u[b] * utab.values[(b, qp)]).sum();
        let mut adv = 0.0;
        if db.x != 0.0 || db.y != 0.0 {
            physical_gradients(utab, geom, qp, &mut ugrads);
            for b in 0..pdim {
                adv += input.prev_u[b] * (db.x * ugrads[b][0] + db.y * ugrads[b][1]);
            }
        }
        let (mut qx, mut qy) = (0.0, 0.0);
        if dc != 0.0 {
            for b in 0..nk {
                qx += input.prev_q[b] * tab.values[(b, qp)];
                qy += input.prev_q[nk + b] * tab.values[(b, qp)];
            }
        }
        let s_u = wd * (u / input.dt + adv);
        let (s_qx, s_qy) = (wd * dc * qx, wd * dc * qy);
        for a in 0..nk {
            let va = tab.values[(a, qp)];
            out[a] += s_qx * va;
            out[nk + a] += s_qy * va;
            out[ui + a] += s_u * va;
        }
    }

    let frule = &reference.face_rule;
    let nqf = frule.len();
    let ftabs = reference.face_tables(pdeg);
    for f in 0..3 {
        if frame.boundary[f] {
            continue;
        }
        let ftab = ftabs.get(f, frame.flipped[f]);
        let n = frame.normal(f);
        let len = geom.face_lengths[f];
        let to = layout.trace_offset(f);
        for (s, w) in frule.weights.iter().enumerate() {
            let db = input.mean.beta_face[f * nqf + s] - input.member.beta_face[f * nqf + s];
            let dbn = db.dot(&n);
            if dbn == 0.0 {
                continue;
            }
            let u: f64 = (0..pdim).map(|b| input.prev_u[b] * ftab.values[(b, s)]).sum();
            let val = w * len * dbn * u;
            for j in 0..m {
                out[to + j] -= val * reference.trace.values[(j, s)];
            }
        }
    }
}
