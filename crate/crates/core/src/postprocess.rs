//! Local reconstruction of `u* ∈ P^{k+1}(K)` from `(q_h, u_h)`:
//!
//! ```text
//! (grad u*, grad z)_K = -(c q_h, grad z)_K   for z ∈ P^{k+1}(K), (z, 1)_K = 0
//! (u*, 1)_K = (u_h, 1)_K
//! ```
//!
//! Solved as a bordered system with one multiplier for the mean constraint.

use nalgebra::DMatrix;

use crate::error::{HdgError, Result};
use crate::field::DgField;
use crate::reference::{eval_at, physical_gradients, ElementFrame, ReferenceElement};

/// Bordered stiffness `[K m; mᵀ 0]` of one element, `m_a = (φ_a, 1)_K`.
fn kkt_matrix(frame: &ElementFrame, reference: &ReferenceElement) -> DMatrix<f64> {
    let n = reference.dim_up();
    let tab = &reference.cell_up;
    let geom = &frame.geometry;
    let mut mat = DMatrix::zeros(n + 1, n + 1);
    let mut grads = vec![[0.0; 2]; n];
    for (qp, w) in reference.cell_rule.weights.iter().enumerate() {
        let wd = w * geom.det;
        physical_gradients(tab, geom, qp, &mut grads);
        for a in 0..n {
            for b in 0..n {
                mat[(a, b)] += wd * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
            }
            let m = wd * tab.values[(a, qp)];
            mat[(a, n)] += m;
            mat[(n, a)] += m;
        }
    }
    mat
}

/// Right-hand side `[-(c q_h, grad φ_a); (u_h, 1)]`.
fn kkt_rhs(frame: &ElementFrame, reference: &ReferenceElement, q: &[f64], u: &[f64], c: &[f64]) -> Vec<f64> {
    let n = reference.dim_up();
    let nk = reference.dim();
    let tab = &reference.cell;
    let up = &reference.cell_up;
    let geom = &frame.geometry;
    let mut rhs = vec![0.0; n + 1];
    let mut grads = vec![[0.0; 2]; n];
    for (qp, w) in reference.cell_rule.weights.iter().enumerate() {
        let wd = w * geom.det;
        physical_gradients(up, geom, qp, &mut grads);
        let qx = eval_at(&tab.values, &q[..nk], qp) * c[qp];
        let qy = eval_at(&tab.values, &q[nk..2 * nk], qp) * c[qp];
        for a in 0..n {
            rhs[a] -= wd * (qx * grads[a][0] + qy * grads[a][1]);
        }
        rhs[n] += wd * eval_at(&tab.values, u, qp);
    }
    rhs
}

/// Reconstructs one element. `c` holds the member's inverse diffusion at the
/// operator cell points; the result has `dim P^{k+1}` coefficients.
pub fn postprocess_element(
    frame: &ElementFrame,
    reference: &ReferenceElement,
    q: &[f64],
    u: &[f64],
    c: &[f64],
) -> Result<Vec<f64>> {
    let kkt = kkt_matrix(frame, reference);
    let rhs = nalgebra::DVector::from_vec(kkt_rhs(frame, reference, q, u, c));
    let sol = kkt.lu().solve(&rhs).ok_or(HdgError::SingularLocal {
        element: frame.index,
        what: "postprocessing stiffness",
    })?;
    Ok(sol.as_slice()[..reference.dim_up()].to_vec())
}

/// Postprocessing with the bordered inverses of every element precomputed.
#[derive(Clone, Debug)]
pub struct Postprocessor {
    inverses: Vec<DMatrix<f64>>,
}

impl Postprocessor {
    pub fn new(frames: &[ElementFrame], reference: &ReferenceElement) -> Result<Self> {
        let inverses = frames
            .iter()
            .map(|frame| {
                kkt_matrix(frame, reference)
                    .try_inverse()
                    .ok_or(HdgError::SingularLocal {
                        element: frame.index,
                        what: "postprocessing stiffness",
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { inverses })
    }

    pub fn element(
        &self,
        frame: &ElementFrame,
        reference: &ReferenceElement,
        q: &[f64],
        u: &[f64],
        c: &[f64],
        out: &mut [f64],
    ) {
        let rhs = kkt_rhs(frame, reference, q, u, c);
        let inv = &self.inverses[frame.index];
        for (a, o) in out.iter_mut().enumerate().take(reference.dim_up()) {
            *o = (0..rhs.len()).map(|b| inv[(a, b)] * rhs[b]).sum();
        }
    }

    /// `c` holds the member's inverse diffusion at operator cell points,
    /// element-major.
    pub fn apply(
        &self,
        frames: &[ElementFrame],
        reference: &ReferenceElement,
        q: &DgField,
        u: &DgField,
        c: &[f64],
    ) -> DgField {
        let nq = reference.cell_rule.len();
        let mut out = DgField::zeros(frames.len(), reference.degree + 1, 1);
        for frame in frames {
            let e = frame.index;
            self.element(
                frame,
                reference,
                q.element(e),
                u.element(e),
                &c[e * nq..(e + 1) * nq],
                out.element_mut(e),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn constant_state_is_kept() {
        let mesh = Mesh::uniform_square(2).unwrap();
        let r = ReferenceElement::new(1).unwrap();
        let frame = ElementFrame::new(&mesh, 5).unwrap();
        let c = vec![2.0; r.cell_rule.len()];
        // constant 0.7 in the orthonormal basis: coefficient 0.7 / φ_0 on the first mode
        let phi0 = r.cell.values[(0, 0)];
        let u = [0.7 / phi0, 0.0, 0.0];
        let out = postprocess_element(&frame, &r, &[0.0; 6], &u, &c).unwrap();
        assert!((out[0] * r.cell_up.values[(0, 0)] - 0.7).abs() < 1e-13);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn precomputed_matches_direct() {
        let mesh = Mesh::uniform_square(2).unwrap();
        let frames = ElementFrame::all(&mesh).unwrap();
        let r = ReferenceElement::new(2).unwrap();
        let post = Postprocessor::new(&frames, &r).unwrap();
        let c: Vec<f64> = (0..r.cell_rule.len()).map(|i| 1.0 + 0.1 * i as f64).collect();
        let q: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let u: Vec<f64> = (0..6).map(|i| (i as f64 * 0.71).cos()).collect();
        let direct = postprocess_element(&frames[3], &r, &q, &u, &c).unwrap();
        let mut out = vec![0.0; r.dim_up()];
        post.element(&frames[3], &r, &q, &u, &c, &mut out);
        for (a, b) in direct.iter().zip(&out) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
