//! Shared test helpers: a monolithic dense solve of one implicit step over
//! all unknowns, written directly from the weak form without the element
//! assembly or the condensation of the library.

#![allow(dead_code)]

use std::collections::HashMap;

use ensemble_hdg::field::DgField;
use ensemble_hdg::mesh::Mesh;
use ensemble_hdg::polybasis::{edge_quadrature, face_basis_values, triangle_quadrature, OrthoBasis};
use ensemble_hdg::problem::ProblemSpec;
use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};

pub fn two_element_mesh() -> Mesh {
    let v = vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    Mesh::from_elements(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
}

/// Affine map of one triangle with its own inverse.
struct Affine {
    origin: Point2<f64>,
    jac: Matrix2<f64>,
    inv: Matrix2<f64>,
    det: f64,
    centroid: Point2<f64>,
}

impl Affine {
    fn new(mesh: &Mesh, e: usize) -> Self {
        let t = mesh.elements()[e];
        let v = [mesh.vertices()[t[0]], mesh.vertices()[t[1]], mesh.vertices()[t[2]]];
        let jac = Matrix2::from_columns(&[v[1] - v[0], v[2] - v[0]]);
        Self {
            origin: v[0],
            jac,
            inv: jac.try_inverse().unwrap(),
            det: jac.determinant().abs(),
            centroid: Point2::from((v[0].coords + v[1].coords + v[2].coords) / 3.0),
        }
    }

    fn map(&self, xi: [f64; 2]) -> Point2<f64> {
        self.origin + self.jac * Vector2::new(xi[0], xi[1])
    }

    fn pull(&self, p: Point2<f64>) -> [f64; 2] {
        let xi = self.inv * (p - self.origin);
        [xi.x, xi.y]
    }
}

/// Basis values and physical gradients at a physical point.
struct Evaluator {
    basis: OrthoBasis,
    vals: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl Evaluator {
    fn new(degree: usize) -> Self {
        let basis = OrthoBasis::new(degree).unwrap();
        let n = basis.dim();
        Self {
            basis,
            vals: vec![0.0; n],
            grads: vec![[0.0; 2]; n],
        }
    }

    fn at(&mut self, map: &Affine, p: Point2<f64>) {
        let xi = map.pull(p);
        self.basis.eval(xi, &mut self.vals);
        self.basis.eval_grad(xi, &mut self.grads);
        for g in self.grads.iter_mut() {
            let r = map.inv.transpose() * Vector2::new(g[0], g[1]);
            *g = [r.x, r.y];
        }
    }

    fn value(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.vals).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, c: &[f64]) -> Vector2<f64> {
        c.iter()
            .zip(&self.grads)
            .fold(Vector2::zeros(), |acc, (a, g)| acc + *a * Vector2::new(g[0], g[1]))
    }
}

pub struct OracleState {
    pub q: DgField,
    pub u: DgField,
    /// Trace coefficients per interior face.
    pub trace: HashMap<usize, Vec<f64>>,
}

/// One implicit step of every member from `(prev_q, prev_u)` at level `t`.
/// With `lag = false` the ensemble lag terms are left out entirely.
#[allow(clippy::too_many_arguments)]
pub fn monolithic_step(
    mesh: &Mesh,
    spec: &ProblemSpec,
    degree: usize,
    tau: f64,
    dt: f64,
    t: f64,
    prev_q: &[DgField],
    prev_u: &[DgField],
    lag: bool,
) -> Vec<OracleState> {
    let k = degree;
    let jn = spec.num_members();
    let mut ev = Evaluator::new(k);
    let nk = ev.basis.dim();
    let m = k + 1;
    let ne = mesh.num_elements();
    let interior: Vec<usize> = (0..mesh.num_faces()).filter(|&f| !mesh.is_boundary(f)).collect();
    let trace_index: HashMap<usize, usize> = interior.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let block = 3 * nk;
    let ndof = ne * block + interior.len() * m;
    let qi = |e: usize, d: usize, a: usize| e * block + d * nk + a;
    let ui = |e: usize, a: usize| e * block + 2 * nk + a;
    let ti = |f: usize, i: usize| ne * block + trace_index[&f] * m + i;

    let cell = triangle_quadrature(2 * k + 2).unwrap();
    let data = triangle_quadrature(2 * k + 4).unwrap();
    let edge = edge_quadrature(2 * k + 2).unwrap();
    let data_edge = edge_quadrature(2 * k + 4).unwrap();
    let cbar = |p: Point2<f64>| spec.members.iter().map(|mb| (mb.inv_diffusion)(p, t)).sum::<f64>() / jn as f64;
    let bbar = |p: Point2<f64>| {
        spec.members
            .iter()
            .fold(Vector2::zeros(), |a, mb| a + (mb.velocity)(p, t))
            / jn as f64
    };
    let mut psi = vec![0.0; m];

    let mut mat = DMatrix::<f64>::zeros(ndof, ndof);
    let mut rhs = DMatrix::<f64>::zeros(ndof, jn);
    let pdeg = prev_u[0].degree();
    let mut pev = Evaluator::new(pdeg);
    let mut qev = Evaluator::new(prev_q[0].degree());

    for e in 0..ne {
        let map = Affine::new(mesh, e);
        for (xi, w) in cell.points.iter().zip(&cell.weights) {
            let p = map.map(*xi);
            let wd = w * map.det;
            let (c, b) = (cbar(p), bbar(p));
            ev.at(&map, p);
            for a in 0..nk {
                let va = ev.vals[a];
                for bb in 0..nk {
                    let vb = ev.vals[bb];
                    for d in 0..2 {
                        mat[(qi(e, d, a), qi(e, d, bb))] += wd * c * va * vb;
                        mat[(qi(e, d, a), ui(e, bb))] -= wd * vb * ev.grads[a][d];
                        mat[(ui(e, a), qi(e, d, bb))] += wd * ev.grads[bb][d] * va;
                    }
                    let adv = b.x * ev.grads[bb][0] + b.y * ev.grads[bb][1];
                    mat[(ui(e, a), ui(e, bb))] += wd * (va * vb / dt + adv * va);
                }
            }
            pev.at(&map, p);
            qev.at(&map, p);
            for (j, mb) in spec.members.iter().enumerate() {
                let pu = prev_u[j].element(e);
                let mut s_u = pev.value(pu) / dt;
                let mut s_q = Vector2::zeros();
                if lag {
                    s_u += (b - (mb.velocity)(p, t)).dot(&pev.gradient(pu));
                    let pq = prev_q[j].element(e);
                    let npq = pq.len() / 2;
                    let qv = Vector2::new(qev.value(&pq[..npq]), qev.value(&pq[npq..]));
                    s_q = (c - (mb.inv_diffusion)(p, t)) * qv;
                }
                for a in 0..nk {
                    rhs[(ui(e, a), j)] += wd * s_u * ev.vals[a];
                    rhs[(qi(e, 0, a), j)] += wd * s_q.x * ev.vals[a];
                    rhs[(qi(e, 1, a), j)] += wd * s_q.y * ev.vals[a];
                }
            }
        }
        for (xi, w) in data.points.iter().zip(&data.weights) {
            let p = map.map(*xi);
            ev.at(&map, p);
            for (j, mb) in spec.members.iter().enumerate() {
                let f = (mb.source)(p, t) * w * map.det;
                for a in 0..nk {
                    rhs[(ui(e, a), j)] += f * ev.vals[a];
                }
            }
        }

        for &face in &mesh.element_faces(e) {
            let len = mesh.face_length(face);
            let mut n = mesh.face_normal(face);
            if n.dot(&(mesh.face_point(face, 0.5) - map.centroid)) < 0.0 {
                n = -n;
            }
            if mesh.is_boundary(face) {
                for (s, w) in data_edge.points.iter().zip(&data_edge.weights) {
                    let p = mesh.face_point(face, *s);
                    ev.at(&map, p);
                    for (j, mb) in spec.members.iter().enumerate() {
                        let g = (mb.boundary)(p, t) * w * len;
                        for a in 0..nk {
                            rhs[(qi(e, 0, a), j)] -= g * ev.vals[a] * n.x;
                            rhs[(qi(e, 1, a), j)] -= g * ev.vals[a] * n.y;
                            rhs[(ui(e, a), j)] += tau * g * ev.vals[a];
                        }
                    }
                }
            }
            for (s, w) in edge.points.iter().zip(&edge.weights) {
                let p = mesh.face_point(face, *s);
                let wl = w * len;
                ev.at(&map, p);
                for a in 0..nk {
                    for bb in 0..nk {
                        mat[(ui(e, a), ui(e, bb))] += wl * tau * ev.vals[a] * ev.vals[bb];
                    }
                }
                if mesh.is_boundary(face) {
                    continue;
                }
                face_basis_values(k, *s, &mut psi);
                let bn = bbar(p).dot(&n);
                for i in 0..m {
                    for a in 0..nk {
                        let va = ev.vals[a];
                        for d in 0..2 {
                            mat[(qi(e, d, a), ti(face, i))] += wl * psi[i] * va * n[d];
                            mat[(ti(face, i), qi(e, d, a))] -= wl * psi[i] * va * n[d];
                        }
                        mat[(ui(e, a), ti(face, i))] -= wl * tau * psi[i] * va;
                        mat[(ti(face, i), ui(e, a))] -= wl * (bn + tau) * psi[i] * va;
                    }
                    for l in 0..m {
                        mat[(ti(face, i), ti(face, l))] += wl * tau * psi[i] * psi[l];
                    }
                }
                if lag {
                    pev.at(&map, p);
                    for (j, mb) in spec.members.iter().enumerate() {
                        let dbn = (bbar(p) - (mb.velocity)(p, t)).dot(&n);
                        let u = pev.value(prev_u[j].element(e));
                        for i in 0..m {
                            rhs[(ti(face, i), j)] -= wl * dbn * u * psi[i];
                        }
                    }
                }
            }
        }
    }

    let lu = mat.lu();
    (0..jn)
        .map(|j| {
            let x: DVector<f64> = lu
                .solve(&rhs.column(j).into_owned())
                .expect("nonsingular monolithic system");
            let mut q = DgField::zeros(ne, k, 2);
            let mut u = DgField::zeros(ne, k, 1);
            for e in 0..ne {
                q.element_mut(e)
                    .copy_from_slice(&x.as_slice()[e * block..e * block + 2 * nk]);
                u.element_mut(e)
                    .copy_from_slice(&x.as_slice()[e * block + 2 * nk..(e + 1) * block]);
            }
            let trace = interior
                .iter()
                .map(|&f| (f, (0..m).map(|i| x[ti(f, i)]).collect()))
                .collect();
            OracleState { q, u, trace }
        })
        .collect()
}

/// Largest DOF difference relative to the largest oracle DOF.
pub fn relative_dof_error(q: &DgField, u: &DgField, oracle: &OracleState) -> f64 {
    let scale = oracle
        .q
        .coeffs()
        .iter()
        .chain(oracle.u.coeffs())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    q.max_abs_diff(&oracle.q).max(u.max_abs_diff(&oracle.u)) / scale
}
