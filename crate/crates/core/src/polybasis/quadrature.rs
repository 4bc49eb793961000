use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{HdgError, Result};

pub const MAX_ORDER: usize = 20;

/// Positive-weight rule, exact for polynomials up to `order`.
#[derive(Clone, Debug)]
pub struct QuadratureRule<P> {
    pub order: usize,
    pub points: Vec<P>,
    pub weights: Vec<f64>,
}

/// Rule on the reference triangle `{x >= 0, y >= 0, x + y <= 1}`.
pub type TriangleRule = QuadratureRule<[f64; 2]>;
/// Rule on the unit interval `[0, 1]`.
pub type EdgeRule = QuadratureRule<f64>;

impl<P> QuadratureRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn gauss_on_unit_interval(npts: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(npts).expect("at least one point"));
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(HdgError::UnsupportedOrder(order))
    }
}

/// Gauss–Legendre rule on `[0, 1]`.
pub fn edge_quadrature(order: usize) -> Result<EdgeRule> {
    check_order(order)?;
    let (points, weights) = gauss_on_unit_interval(order / 2 + 1).into_iter().unzip();
    Ok(EdgeRule { order, points, weights })
}

/// Collapsed-coordinate (Duffy) product rule on the reference triangle.
pub fn triangle_quadrature(order: usize) -> Result<TriangleRule> {
    check_order(order)?;
    // The collapse Jacobian adds one degree in the second direction.
    let along = gauss_on_unit_interval(order / 2 + 1);
    let across = gauss_on_unit_interval(order.div_ceil(2) + 1);
    let mut points = Vec::with_capacity(along.len() * across.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for &(b, wb) in &across {
        for &(a, wa) in &along {
            points.push([a * (1.0 - b), b]);
            weights.push(wa * wb * (1.0 - b));
        }
    }
    Ok(TriangleRule { order, points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Closed form of the monomial integral over the reference triangle.
    fn exact_monomial(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn triangle_examples() {
        let r = triangle_quadrature(2).unwrap();
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - 0.5).abs() < 1e-15);
        let xy: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
        let r4 = triangle_quadrature(4).unwrap();
        let x4: f64 = r4.points.iter().zip(&r4.weights).map(|(p, w)| w * p[0].powi(4)).sum();
        assert!((x4 - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_exact_up_to_order() {
        for order in 1..=MAX_ORDER {
            let r = triangle_quadrature(order).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let e = exact_monomial(a, b);
                    assert!(
                        (q - e).abs() <= 1e-13 * e.max(1e-3),
                        "order {order} x^{a} y^{b}: {q} vs {e}"
                    );
                }
            }
        }
    }

    #[test]
    fn edge_examples() {
        let r = edge_quadrature(2).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let x2: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        assert!((x2 - 1.0 / 3.0).abs() < 1e-15);
        let r5 = edge_quadrature(5).unwrap();
        let x5: f64 = r5.points.iter().zip(&r5.weights).map(|(x, w)| w * x.powi(5)).sum();
        assert!((x5 - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn edge_exact_up_to_order() {
        for order in 1..=MAX_ORDER {
            let r = edge_quadrature(order).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in 0..=order as i32 {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unsupported_orders() {
        assert!(matches!(triangle_quadrature(0), Err(HdgError::UnsupportedOrder(0))));
        assert!(matches!(edge_quadrature(21), Err(HdgError::UnsupportedOrder(21))));
    }
}
