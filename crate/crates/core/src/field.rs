//! Piecewise polynomial fields stored as per-element coefficient blocks.

use nalgebra::DMatrix;

use crate::polybasis::dim_p;

/// Discontinuous field of `components` scalar components, each in `P^degree`
/// on every element. Layout: element-major, then component, then mode.
#[derive(Clone, Debug, PartialEq)]
pub struct DgField {
    degree: usize,
    components: usize,
    num_elements: usize,
    coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(num_elements: usize, degree: usize, components: usize) -> Self {
        Self {
            degree,
            components,
            num_elements,
            coeffs: vec![0.0; num_elements * components * dim_p(degree)],
        }
    }

    pub fn from_coeffs(num_elements: usize, degree: usize, components: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(
            coeffs.len(),
            num_elements * components * dim_p(degree),
            "coefficient length"
        );
        Self {
            degree,
            components,
            num_elements,
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        dim_p(self.degree)
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    fn block(&self) -> usize {
        self.components * self.dim()
    }

    /// All components on one element.
    pub fn element(&self, e: usize) -> &[f64] {
        let b = self.block();
        &self.coeffs[e * b..(e + 1) * b]
    }

    pub fn element_mut(&mut self, e: usize) -> &mut [f64] {
        let b = self.block();
        &mut self.coeffs[e * b..(e + 1) * b]
    }

    pub fn component(&self, e: usize, c: usize) -> &[f64] {
        let d = self.dim();
        &self.element(e)[c * d..(c + 1) * d]
    }

    /// Value of component `c` at tabulation column `q`.
    #[inline]
    pub fn eval(&self, e: usize, c: usize, values: &DMatrix<f64>, q: usize) -> f64 {
        crate::reference::eval_at(values, self.component(e, c), q)
    }

    pub fn max_abs_diff(&self, other: &DgField) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Piecewise `P^k` function on mesh faces, `k + 1` modes per face in the
/// orientation of the stored face.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl FaceField {
    pub fn face(&self, f: usize) -> &[f64] {
        let m = self.degree + 1;
        &self.coeffs[f * m..(f + 1) * m]
    }
}
