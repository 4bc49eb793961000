//! Polynomial bases on the reference triangle and edge, plus quadrature.

mod basis;
mod quadrature;

pub use basis::{
    dim_p, eval_element_basis, eval_face_basis, face_basis_values, monomial_exponents, ElementBasis, FaceBasis,
    OrthoBasis,
};
pub use quadrature::{edge_quadrature, triangle_quadrature, EdgeRule, QuadratureRule, TriangleRule, MAX_ORDER};
