use nalgebra::DMatrix;

use super::quadrature::{triangle_quadrature, MAX_ORDER};
use crate::error::{HdgError, Result};

/// Dimension of `P^k` in two variables.
pub const fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

const CENTER: [f64; 2] = [1.0 / 3.0, 1.0 / 3.0];

/// Monomial exponents of total degree `<= k`, graded by total degree.
pub fn monomial_exponents(k: usize) -> Vec<(i32, i32)> {
    (0..=k as i32).flat_map(|d| (0..=d).map(move |b| (d - b, b))).collect()
}

/// Orthonormal basis of `P^k` on the reference triangle.
///
/// Gram–Schmidt (via Cholesky of the Gram matrix) applied to graded monomials
/// centred at the centroid, so the first `dim_p(m)` functions span `P^m` for
/// every `m <= k` and the first function is the constant `sqrt(2)`.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    degree: usize,
    exponents: Vec<(i32, i32)>,
    /// Row `i` holds the monomial coefficients of basis function `i`.
    coeffs: DMatrix<f64>,
}

impl OrthoBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if 2 * degree > MAX_ORDER {
            return Err(HdgError::UnsupportedDegree(degree));
        }
        let exponents = monomial_exponents(degree);
        let n = exponents.len();
        let rule = triangle_quadrature((2 * degree).max(1))?;
        let mut gram = DMatrix::zeros(n, n);
        let mut m = vec![0.0; n];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            eval_monomials(&exponents, *p, &mut m);
            for i in 0..n {
                for j in 0..=i {
                    gram[(i, j)] += w * m[i] * m[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[(j, i)] = gram[(i, j)];
            }
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| HdgError::InvalidArgument("monomial Gram matrix not positive definite".into()))?;
        let coeffs = chol
            .l()
            .try_inverse()
            .ok_or_else(|| HdgError::InvalidArgument("singular Cholesky factor".into()))?;
        Ok(Self {
            degree,
            exponents,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn eval(&self, xi: [f64; 2], out: &mut [f64]) {
        let n = self.dim();
        let mut m = [0.0; 64];
        eval_monomials(&self.exponents, xi, &mut m[..n]);
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..=i).map(|j| self.coeffs[(i, j)] * m[j]).sum();
        }
    }

    /// Reference-coordinate gradients.
    pub fn eval_grad(&self, xi: [f64; 2], out: &mut [[f64; 2]]) {
        let n = self.dim();
        let mut gx = [0.0; 64];
        let mut gy = [0.0; 64];
        let (x, y) = (xi[0] - CENTER[0], xi[1] - CENTER[1]);
        for (j, &(a, b)) in self.exponents.iter().enumerate() {
            gx[j] = if a > 0 {
                a as f64 * x.powi(a - 1) * y.powi(b)
            } else {
                0.0
            };
            gy[j] = if b > 0 {
                b as f64 * x.powi(a) * y.powi(b - 1)
            } else {
                0.0
            };
        }
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut g = [0.0; 2];
            for j in 0..=i {
                g[0] += self.coeffs[(i, j)] * gx[j];
                g[1] += self.coeffs[(i, j)] * gy[j];
            }
            *o = g;
        }
    }
}

fn eval_monomials(exponents: &[(i32, i32)], xi: [f64; 2], out: &mut [f64]) {
    let (x, y) = (xi[0] - CENTER[0], xi[1] - CENTER[1]);
    for (o, &(a, b)) in out.iter_mut().zip(exponents) {
        *o = x.powi(a) * y.powi(b);
    }
}

/// Orthonormal Legendre polynomials on `[0, 1]`.
pub fn face_basis_values(k: usize, s: f64, out: &mut [f64]) {
    let x = 2.0 * s - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    for i in 0..=k {
        let p = match i {
            0 => 1.0,
            1 => x,
            _ => {
                let n = i as f64;
                let p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        out[i] = p * (2.0 * i as f64 + 1.0).sqrt();
    }
}

/// Element basis tabulated at a set of reference points.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub degree: usize,
    pub dim: usize,
    /// `values[(i, q)]`: basis function `i` at point `q`.
    pub values: DMatrix<f64>,
    /// Reference gradients, `grads[d][(i, q)]`.
    pub grads: [DMatrix<f64>; 2],
}

impl ElementBasis {
    pub fn tabulate(basis: &OrthoBasis, points: &[[f64; 2]]) -> Self {
        let dim = basis.dim();
        let nq = points.len();
        let mut values = DMatrix::zeros(dim, nq);
        let mut gx = DMatrix::zeros(dim, nq);
        let mut gy = DMatrix::zeros(dim, nq);
        let mut v = vec![0.0; dim];
        let mut g = vec![[0.0; 2]; dim];
        for (q, p) in points.iter().enumerate() {
            basis.eval(*p, &mut v);
            basis.eval_grad(*p, &mut g);
            for i in 0..dim {
                values[(i, q)] = v[i];
                gx[(i, q)] = g[i][0];
                gy[(i, q)] = g[i][1];
            }
        }
        Self {
            degree: basis.degree(),
            dim,
            values,
            grads: [gx, gy],
        }
    }
}

/// Face basis tabulated at points of `[0, 1]`.
#[derive(Clone, Debug)]
pub struct FaceBasis {
    pub degree: usize,
    pub dim: usize,
    pub values: DMatrix<f64>,
}

pub fn eval_element_basis(k: usize, points: &[[f64; 2]]) -> Result<ElementBasis> {
    Ok(ElementBasis::tabulate(&OrthoBasis::new(k)?, points))
}

pub fn eval_face_basis(k: usize, points: &[f64]) -> FaceBasis {
    let mut values = DMatrix::zeros(k + 1, points.len());
    let mut v = vec![0.0; k + 1];
    for (q, &s) in points.iter().enumerate() {
        face_basis_values(k, s, &mut v);
        values.column_mut(q).copy_from_slice(&v);
    }
    FaceBasis {
        degree: k,
        dim: k + 1,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::quadrature::edge_quadrature;

    fn mass(tab: &ElementBasis, weights: &[f64]) -> DMatrix<f64> {
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
        &tab.values * w * tab.values.transpose()
    }

    #[test]
    fn dims() {
        for k in 0..=4 {
            assert_eq!(OrthoBasis::new(k).unwrap().dim(), (k + 1) * (k + 2) / 2);
            assert_eq!(eval_face_basis(k, &[0.3]).dim, k + 1);
        }
    }

    #[test]
    fn constant_basis_k0() {
        let b = OrthoBasis::new(0).unwrap();
        let mut v = [0.0];
        b.eval([0.2, 0.1], &mut v);
        assert!((v[0] - 2f64.sqrt()).abs() < 1e-15);
        // the value-1 function has mass 1/2 on the reference triangle
        let r = triangle_quadrature(2).unwrap();
        let m: f64 = r.weights.iter().sum();
        assert!((m - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_and_spd() {
        for k in 0..=4 {
            let r = triangle_quadrature(2 * k + 2).unwrap();
            let tab = eval_element_basis(k, &r.points).unwrap();
            let m = mass(&tab, &r.weights);
            let err = (&m - DMatrix::identity(tab.dim, tab.dim)).abs().max();
            assert!(err < 1e-11, "k={k}: {err}");
            assert!(m.cholesky().is_some());
        }
    }

    #[test]
    fn k1_gradients_constant() {
        let b = OrthoBasis::new(1).unwrap();
        let mut g1 = [[0.0; 2]; 3];
        let mut g2 = [[0.0; 2]; 3];
        b.eval_grad([0.1, 0.2], &mut g1);
        b.eval_grad([0.7, 0.05], &mut g2);
        for i in 0..3 {
            for d in 0..2 {
                assert!((g1[i][d] - g2[i][d]).abs() < 1e-13);
            }
        }
    }

    fn project_and_residual(k: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let r = triangle_quadrature(2 * k + 4).unwrap();
        let tab = eval_element_basis(k, &r.points).unwrap();
        let c: Vec<f64> = (0..tab.dim)
            .map(|i| {
                (0..r.len())
                    .map(|q| r.weights[q] * f(r.points[q][0], r.points[q][1]) * tab.values[(i, q)])
                    .sum()
            })
            .collect();
        let check = triangle_quadrature(12).unwrap();
        let ctab = eval_element_basis(k, &check.points).unwrap();
        (0..check.len())
            .map(|q| {
                let p = check.points[q];
                let v: f64 = (0..tab.dim).map(|i| c[i] * ctab.values[(i, q)]).sum();
                (v - f(p[0], p[1])).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn reproduces_polynomials() {
        assert!(project_and_residual(2, |x, y| x * x + y * y) < 1e-12);
        assert!(project_and_residual(0, |_, _| 1.0) < 1e-14);
        for k in 0..=3 {
            for (a, b) in monomial_exponents(k) {
                let res = project_and_residual(k, |x, y| x.powi(a) * y.powi(b));
                assert!(res < 1e-12, "k={k} x^{a}y^{b}: {res}");
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let b = OrthoBasis::new(3).unwrap();
        let n = b.dim();
        let eps = 1e-5;
        let p = [0.21, 0.37];
        let mut g = vec![[0.0; 2]; n];
        b.eval_grad(p, &mut g);
        let (mut vp, mut vm) = (vec![0.0; n], vec![0.0; n]);
        for d in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += eps;
            pm[d] -= eps;
            b.eval(pp, &mut vp);
            b.eval(pm, &mut vm);
            for i in 0..n {
                let fd = (vp[i] - vm[i]) / (2.0 * eps);
                assert!((fd - g[i][d]).abs() < 1e-8 * (1.0 + g[i][d].abs()), "{i} {d}");
            }
        }
    }

    #[test]
    fn face_basis_orthonormal() {
        let r = edge_quadrature(10).unwrap();
        let tab = eval_face_basis(4, &r.points);
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&r.weights));
        let m = &tab.values * w * tab.values.transpose();
        assert!((m - DMatrix::identity(5, 5)).abs().max() < 1e-13);
    }

    #[test]
    fn leading_functions_span_lower_degree() {
        // the first dim_p(1) functions of the degree-3 basis are affine
        let b = OrthoBasis::new(3).unwrap();
        let mut v = vec![0.0; b.dim()];
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.25, 0.25]];
        let vals: Vec<Vec<f64>> = pts
            .iter()
            .map(|&p| {
                b.eval(p, &mut v);
                v.clone()
            })
            .collect();
        for i in 0..3 {
            // affine: value at centroid-ish point equals the barycentric combination
            let interp = 0.5 * vals[0][i] + 0.25 * vals[1][i] + 0.25 * vals[2][i];
            assert!((interp - vals[3][i]).abs() < 1e-12);
        }
    }
}
