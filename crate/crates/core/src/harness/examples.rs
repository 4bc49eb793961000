//! Built-in ensembles on the unit square.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Point2, Vector2};

use crate::problem::{ExactSolution, Member, ProblemSpec};

/// Inverse diffusion coefficients of the smooth diffusion-dominated ensemble.
pub const SMOOTH_INV_DIFFUSION: [f64; 3] = [0.26959, 0.26633, 0.30525];
/// Velocity scales of the smooth ensemble, `β_j = a_j (y, x)`.
pub const SMOOTH_VELOCITY_SCALE: [f64; 3] = [1.6797, 1.6551, 1.1626];

pub const LAYER_INV_DIFFUSION: [f64; 3] = [1e4, 2e4, 3e4];
pub const BOUNDARY_LAYER_INV_DIFFUSION: [f64; 3] = [60.0, 120.0, 180.0];
pub const BOUNDARY_LAYER_SOURCE: [f64; 3] = [2.0, 5.0, 8.0];
pub const LAYER_VELOCITY: [[f64; 2]; 3] = [[2.0, 3.0], [3.0, 4.0], [4.0, 5.0]];

/// `(r², x0, y0)` of the circular interior layers.
pub const LAYER_CIRCLES: [(f64, f64, f64); 3] = [
    (1.0 / 12.0, 1.0 / 3.0, 0.5),
    (1.0 / 14.0, 0.5, 1.0 / 3.0),
    (1.0 / 16.0, 0.5, 0.5),
];

/// Member whose data match a prescribed exact solution, given as `u`,
/// `grad u`, `u_t` and `Δu`, for constant inverse diffusion `c` and a
/// divergence-free steady velocity.
pub fn manufactured(
    c: f64,
    velocity: impl Fn(Point2<f64>) -> Vector2<f64> + Send + Sync + 'static,
    u: impl Fn(Point2<f64>, f64) -> f64 + Send + Sync + 'static,
    grad: impl Fn(Point2<f64>, f64) -> Vector2<f64> + Send + Sync + 'static,
    dudt: impl Fn(Point2<f64>, f64) -> f64 + Send + Sync + 'static,
    laplacian: impl Fn(Point2<f64>, f64) -> f64 + Send + Sync + 'static,
) -> Member {
    let u = Arc::new(u);
    let grad = Arc::new(grad);
    let velocity = Arc::new(velocity);
    let (uf, ub, ui) = (u.clone(), u.clone(), u.clone());
    let (gq, gf) = (grad.clone(), grad.clone());
    let vf = velocity.clone();
    Member {
        inv_diffusion: Arc::new(move |_, _| c),
        velocity: Arc::new(move |p, _| velocity(p)),
        source: Arc::new(move |p, t| dudt(p, t) - laplacian(p, t) / c + vf(p).dot(&gf(p, t))),
        boundary: Arc::new(move |p, t| ub(p, t)),
        initial: Arc::new(move |p| ui(p, 0.0)),
        exact: Some(ExactSolution {
            u: Arc::new(move |p, t| uf(p, t)),
            q: Arc::new(move |p, t| -gq(p, t) / c),
        }),
    }
}

/// Smooth diffusion-dominated ensemble with `u_j = sin t sin x sin y / j`,
/// final time 1.
pub fn example1() -> ProblemSpec {
    let members = (0..3)
        .map(|j| {
            let c = SMOOTH_INV_DIFFUSION[j];
            let a = SMOOTH_VELOCITY_SCALE[j];
            let s = 1.0 / (j + 1) as f64;
            manufactured(
                c,
                move |p| a * Vector2::new(p.y, p.x),
                move |p, t| s * t.sin() * p.x.sin() * p.y.sin(),
                move |p, t| s * t.sin() * Vector2::new(p.x.cos() * p.y.sin(), p.x.sin() * p.y.cos()),
                move |p, t| s * t.cos() * p.x.sin() * p.y.sin(),
                move |p, t| -2.0 * s * t.sin() * p.x.sin() * p.y.sin(),
            )
        })
        .collect();
    ProblemSpec::new(members, 1.0).expect("three members")
}

/// Bubble times a sharp arctan ramp across a circle.
#[derive(Clone, Copy, Debug)]
pub struct InteriorLayer {
    pub sharpness: f64,
    pub radius_sq: f64,
    pub center: (f64, f64),
}

impl InteriorLayer {
    fn phi(&self, p: Point2<f64>) -> (f64, Vector2<f64>, f64) {
        let s = 2.0 * self.sharpness;
        let (dx, dy) = (p.x - self.center.0, p.y - self.center.1);
        let phi = s * (self.radius_sq - dx * dx - dy * dy);
        (phi, Vector2::new(-2.0 * s * dx, -2.0 * s * dy), -4.0 * s)
    }

    /// Spatial profile and its gradient and Laplacian.
    pub fn profile(&self, p: Point2<f64>) -> (f64, Vector2<f64>, f64) {
        let (x, y) = (p.x, p.y);
        let b = x * (1.0 - x) * y * (1.0 - y);
        let gb = Vector2::new((1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y));
        let lb = -2.0 * y * (1.0 - y) - 2.0 * x * (1.0 - x);
        let (phi, gphi, lphi) = self.phi(p);
        let d = 1.0 + phi * phi;
        let a = 0.5 + phi.atan() / PI;
        let ga = gphi / (PI * d);
        let la = (lphi * d - 2.0 * phi * gphi.norm_squared()) / (PI * d * d);
        (b * a, gb * a + ga * b, lb * a + 2.0 * gb.dot(&ga) + b * la)
    }
}

/// Convection-dominated ensemble with sharp circular interior layers,
/// `u_j = sin t x(1-x)y(1-y)(1/2 + atan(2 sqrt(c_j)(r² - |x - x0|²)) / π)`,
/// final time 0.1.
pub fn example2() -> ProblemSpec {
    let members = (0..3)
        .map(|j| {
            let c = LAYER_INV_DIFFUSION[j];
            let beta = Vector2::new(LAYER_VELOCITY[j][0], LAYER_VELOCITY[j][1]);
            let (r2, x0, y0) = LAYER_CIRCLES[j];
            let layer = InteriorLayer {
                sharpness: c.sqrt(),
                radius_sq: r2,
                center: (x0, y0),
            };
            manufactured(
                c,
                move |_| beta,
                move |p, t| t.sin() * layer.profile(p).0,
                move |p, t| t.sin() * layer.profile(p).1,
                move |p, t| t.cos() * layer.profile(p).0,
                move |p, t| t.sin() * layer.profile(p).2,
            )
        })
        .collect();
    ProblemSpec::new(members, 0.1).expect("three members")
}

/// Convection-dominated ensemble with constant sources and boundary layers;
/// no exact solution. Final time 0.1.
pub fn example3() -> ProblemSpec {
    let members = (0..3)
        .map(|j| {
            Member::constant(
                BOUNDARY_LAYER_INV_DIFFUSION[j],
                Vector2::new(LAYER_VELOCITY[j][0], LAYER_VELOCITY[j][1]),
                BOUNDARY_LAYER_SOURCE[j],
            )
        })
        .collect();
    ProblemSpec::new(members, 0.1).expect("three members")
}

/// Built-in example by number.
pub fn example(number: usize) -> Option<ProblemSpec> {
    match number {
        1 => Some(example1()),
        2 => Some(example2()),
        3 => Some(example3()),
        _ => None,
    }
}
