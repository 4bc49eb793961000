//! Element and face L2 projections, and the HDG projection used to verify
//! the discretization.

use nalgebra::{DMatrix, DVector, Point2, Vector2};

use crate::error::{HdgError, Result};
use crate::field::{DgField, FaceField};
use crate::mesh::Mesh;
use crate::polybasis::{
    dim_p, edge_quadrature, eval_face_basis, triangle_quadrature, ElementBasis, OrthoBasis, TriangleRule, MAX_ORDER,
};
use crate::reference::{ElementFrame, ReferenceElement};

fn projection_rule(degree: usize) -> Result<TriangleRule> {
    triangle_quadrature((2 * degree + 4).min(MAX_ORDER))
}

/// Projects `f` onto one element using precomputed tables. With an
/// orthonormal reference basis the element mass matrix is `det J * I`, so the
/// coefficients are plain weighted sums.
pub(crate) fn project_components<const C: usize>(
    frame: &ElementFrame,
    table: &ElementBasis,
    rule: &TriangleRule,
    f: impl Fn(Point2<f64>) -> [f64; C],
    out: &mut [f64],
) {
    let dim = table.dim;
    out[..C * dim].iter_mut().for_each(|c| *c = 0.0);
    for (q, (p, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let vals = f(frame.geometry.map(*p));
        for c in 0..C {
            let wv = w * vals[c];
            for i in 0..dim {
                out[c * dim + i] += wv * table.values[(i, q)];
            }
        }
    }
}

/// L2 projection of a scalar function onto discontinuous `P^degree`.
pub fn l2_project_element(mesh: &Mesh, degree: usize, f: impl Fn(Point2<f64>) -> f64) -> Result<DgField> {
    let basis = OrthoBasis::new(degree)?;
    let rule = projection_rule(degree)?;
    let table = ElementBasis::tabulate(&basis, &rule.points);
    let mut field = DgField::zeros(mesh.num_elements(), degree, 1);
    for e in 0..mesh.num_elements() {
        let frame = ElementFrame::new(mesh, e)?;
        project_components(&frame, &table, &rule, |x| [f(x)], field.element_mut(e));
    }
    Ok(field)
}

/// L2 projection of a vector function onto discontinuous `[P^degree]^2`.
pub fn l2_project_element_vector(
    mesh: &Mesh,
    degree: usize,
    f: impl Fn(Point2<f64>) -> Vector2<f64>,
) -> Result<DgField> {
    let basis = OrthoBasis::new(degree)?;
    let rule = projection_rule(degree)?;
    let table = ElementBasis::tabulate(&basis, &rule.points);
    let mut field = DgField::zeros(mesh.num_elements(), degree, 2);
    for e in 0..mesh.num_elements() {
        let frame = ElementFrame::new(mesh, e)?;
        project_components(
            &frame,
            &table,
            &rule,
            |x| {
                let v = f(x);
                [v.x, v.y]
            },
            field.element_mut(e),
        );
    }
    Ok(field)
}

/// `||field - f||` over the mesh; `f` returns one value per component.
pub fn l2_distance<const C: usize>(mesh: &Mesh, field: &DgField, f: impl Fn(Point2<f64>) -> [f64; C]) -> Result<f64> {
    if field.components() != C {
        return Err(HdgError::DimensionMismatch {
            expected: C,
            found: field.components(),
        });
    }
    let basis = OrthoBasis::new(field.degree())?;
    let rule = projection_rule(field.degree())?;
    let table = ElementBasis::tabulate(&basis, &rule.points);
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let geom = mesh.element_geometry(e)?;
        for (q, (p, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let exact = f(geom.map(*p));
            for (c, ex) in exact.iter().enumerate() {
                let d = field.eval(e, c, &table.values, q) - ex;
                total += w * geom.det * d * d;
            }
        }
    }
    Ok(total.sqrt())
}

/// Re-projects a discontinuous field onto `P^degree`, element by element.
pub fn l2_project_field(mesh: &Mesh, field: &DgField, degree: usize) -> Result<DgField> {
    let basis = OrthoBasis::new(degree)?;
    let source = OrthoBasis::new(field.degree())?;
    let rule = projection_rule(degree.max(field.degree()))?;
    let table = ElementBasis::tabulate(&basis, &rule.points);
    let src = ElementBasis::tabulate(&source, &rule.points);
    let comps = field.components();
    let dim = basis.dim();
    let mut out = DgField::zeros(mesh.num_elements(), degree, comps);
    for e in 0..mesh.num_elements() {
        let block = out.element_mut(e);
        for (q, w) in rule.weights.iter().enumerate() {
            for c in 0..comps {
                let v = w * field.eval(e, c, &src.values, q);
                for i in 0..dim {
                    block[c * dim + i] += v * table.values[(i, q)];
                }
            }
        }
    }
    Ok(out)
}

/// L2 projection onto `P^k` on every face.
pub fn l2_project_face(mesh: &Mesh, degree: usize, f: impl Fn(Point2<f64>) -> f64) -> Result<FaceField> {
    let rule = edge_quadrature((2 * degree + 4).min(MAX_ORDER))?;
    let table = eval_face_basis(degree, &rule.points);
    let m = degree + 1;
    let mut coeffs = vec![0.0; mesh.num_faces() * m];
    for face in 0..mesh.num_faces() {
        for (q, (&s, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let v = w * f(mesh.face_point(face, s));
            for i in 0..m {
                coeffs[face * m + i] += v * table.values[(i, q)];
            }
        }
    }
    Ok(FaceField { degree, coeffs })
}

/// `||field - f||_{dT_h}`: summed over element boundaries, so interior faces
/// count twice.
pub fn face_distance(mesh: &Mesh, field: &FaceField, f: impl Fn(Point2<f64>) -> f64) -> Result<f64> {
    let rule = edge_quadrature((2 * field.degree + 6).min(MAX_ORDER))?;
    let table = eval_face_basis(field.degree, &rule.points);
    let mut total = 0.0;
    for face in 0..mesh.num_faces() {
        let len = mesh.face_length(face);
        let mult = if mesh.is_boundary(face) { 1.0 } else { 2.0 };
        let coeffs = field.face(face);
        for (q, (&s, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let v: f64 = coeffs.iter().enumerate().map(|(i, c)| c * table.values[(i, q)]).sum();
            let d = v - f(mesh.face_point(face, s));
            total += mult * w * len * d * d;
        }
    }
    Ok(total.sqrt())
}

/// HDG projection of `(q, u)` on one element: moments of `q + beta u` and
/// `u` against `P^{k-1}`, and of `q.n + beta.n u + tau u` against `P^k` on
/// each face.
pub fn hdg_project_element(
    frame: &ElementFrame,
    reference: &ReferenceElement,
    q: &dyn Fn(Point2<f64>) -> Vector2<f64>,
    u: &dyn Fn(Point2<f64>) -> f64,
    beta: &dyn Fn(Point2<f64>) -> Vector2<f64>,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(HdgError::InvalidArgument(format!(
            "stabilization must be positive on element {}, got {tau}",
            frame.index
        )));
    }
    let k = reference.degree;
    let nk = reference.dim();
    let low = if k == 0 { 0 } else { dim_p(k - 1) };
    let n = 3 * nk;
    let geom = &frame.geometry;
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    let rule = &reference.data_rule;
    let tab = &reference.data;
    for (qi, (p, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let x = geom.map(*p);
        let wd = w * geom.det;
        let (qv, uv, bv) = (q(x), u(x), beta(x));
        for a in 0..low {
            let va = tab.values[(a, qi)];
            for d in 0..2 {
                let row = d * low + a;
                for b in 0..nk {
                    let vb = tab.values[(b, qi)];
                    mat[(row, d * nk + b)] += wd * vb * va;
                    mat[(row, 2 * nk + b)] += wd * bv[d] * vb * va;
                }
                rhs[row] += wd * (qv[d] + bv[d] * uv) * va;
            }
            let row = 2 * low + a;
            for b in 0..nk {
                mat[(row, 2 * nk + b)] += wd * tab.values[(b, qi)] * va;
            }
            rhs[row] += wd * uv * va;
        }
    }

    let m = reference.face_dim();
    let frule = &reference.data_face_rule;
    for f in 0..3 {
        let ftab = reference.data_face.get(f, frame.flipped[f]);
        let pts = frame.face_points(f, frule);
        let nrm = frame.normal(f);
        let len = geom.face_lengths[f];
        for (qi, (x, w)) in pts.iter().zip(&frule.weights).enumerate() {
            let wl = w * len;
            let (qv, uv, bv) = (q(*x), u(*x), beta(*x));
            let bn = bv.dot(&nrm);
            let target = qv.dot(&nrm) + bn * uv + tau * uv;
            for mu in 0..m {
                let row = 3 * low + f * m + mu;
                let psi = reference.data_trace.values[(mu, qi)] * wl;
                for b in 0..nk {
                    let vb = ftab.values[(b, qi)];
                    mat[(row, b)] += psi * vb * nrm.x;
                    mat[(row, nk + b)] += psi * vb * nrm.y;
                    mat[(row, 2 * nk + b)] += psi * (bn + tau) * vb;
                }
                rhs[row] += psi * target;
            }
        }
    }
    let sol: DVector<f64> = mat.lu().solve(&rhs).ok_or(HdgError::SingularLocal {
        element: frame.index,
        what: "HDG projection moment system",
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(HdgError::SingularLocal {
            element: frame.index,
            what: "HDG projection moment system",
        });
    }
    Ok((
        sol.rows(0, 2 * nk).iter().cloned().collect(),
        sol.rows(2 * nk, nk).iter().cloned().collect(),
    ))
}

/// HDG projection over the mesh, one stabilization constant per element.
pub fn hdg_project(
    mesh: &Mesh,
    degree: usize,
    q: impl Fn(Point2<f64>) -> Vector2<f64>,
    u: impl Fn(Point2<f64>) -> f64,
    beta: impl Fn(Point2<f64>) -> Vector2<f64>,
    tau: &[f64],
) -> Result<(DgField, DgField)> {
    if tau.len() != mesh.num_elements() {
        return Err(HdgError::DimensionMismatch {
            expected: mesh.num_elements(),
            found: tau.len(),
        });
    }
    let reference = ReferenceElement::new(degree)?;
    let mut qf = DgField::zeros(mesh.num_elements(), degree, 2);
    let mut uf = DgField::zeros(mesh.num_elements(), degree, 1);
    for e in 0..mesh.num_elements() {
        let frame = ElementFrame::new(mesh, e)?;
        let (qc, uc) = hdg_project_element(&frame, &reference, &q, &u, &beta, tau[e])?;
        qf.element_mut(e).copy_from_slice(&qc);
        uf.element_mut(e).copy_from_slice(&uc);
    }
    Ok((qf, uf))
}

/// Observed convergence rate between two consecutive levels where `h` halves.
pub fn rate(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
