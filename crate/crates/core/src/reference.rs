//! Quadrature rules and basis tables shared by every element of a given degree.

use nalgebra::{DMatrix, Point2, Vector2};

use crate::error::{HdgError, Result};
use crate::mesh::{ElementGeometry, Mesh};
use crate::polybasis::{
    edge_quadrature, eval_face_basis, triangle_quadrature, EdgeRule, ElementBasis, FaceBasis, OrthoBasis, TriangleRule,
};

pub const MAX_DEGREE: usize = 3;

/// Reference vertex coordinates in local vertex order.
const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference point on local face `face` at global face parameter `s`.
pub fn face_reference_point(face: usize, flipped: bool, s: f64) -> [f64; 2] {
    let (a, b) = if flipped {
        (REF_VERTICES[(face + 1) % 3], REF_VERTICES[face])
    } else {
        (REF_VERTICES[face], REF_VERTICES[(face + 1) % 3])
    };
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Element basis tables at one set of points, for every local face and
/// orientation: `faces[flipped as usize][local_face]`.
#[derive(Clone, Debug)]
pub struct FaceTables {
    pub faces: [[ElementBasis; 3]; 2],
}

impl FaceTables {
    fn new(basis: &OrthoBasis, rule: &EdgeRule) -> Self {
        let build = |flip: bool| {
            std::array::from_fn(|f| {
                let pts: Vec<[f64; 2]> = rule.points.iter().map(|&s| face_reference_point(f, flip, s)).collect();
                ElementBasis::tabulate(basis, &pts)
            })
        };
        Self {
            faces: [build(false), build(true)],
        }
    }

    #[inline]
    pub fn get(&self, local_face: usize, flipped: bool) -> &ElementBasis {
        &self.faces[usize::from(flipped)][local_face]
    }
}

/// Everything that depends only on the polynomial degree `k`.
///
/// Two rule families are kept: operator rules of order `2k + 2` for the
/// bilinear forms, and data rules of order `2k + 4` for sources, boundary data
/// and error norms.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub degree: usize,
    pub basis: OrthoBasis,
    /// Degree `k + 1`, used for initial data and postprocessing.
    pub basis_up: OrthoBasis,
    pub cell_rule: TriangleRule,
    pub face_rule: EdgeRule,
    pub data_rule: TriangleRule,
    pub data_face_rule: EdgeRule,
    pub cell: ElementBasis,
    pub cell_up: ElementBasis,
    pub data: ElementBasis,
    pub data_up: ElementBasis,
    pub face: FaceTables,
    pub face_up: FaceTables,
    pub data_face: FaceTables,
    pub trace: FaceBasis,
    pub data_trace: FaceBasis,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(HdgError::UnsupportedDegree(degree));
        }
        let basis = OrthoBasis::new(degree)?;
        let basis_up = OrthoBasis::new(degree + 1)?;
        let cell_rule = triangle_quadrature(2 * degree + 2)?;
        let face_rule = edge_quadrature(2 * degree + 2)?;
        let data_rule = triangle_quadrature(2 * degree + 4)?;
        let data_face_rule = edge_quadrature(2 * degree + 4)?;
        Ok(Self {
            cell: ElementBasis::tabulate(&basis, &cell_rule.points),
            cell_up: ElementBasis::tabulate(&basis_up, &cell_rule.points),
            data: ElementBasis::tabulate(&basis, &data_rule.points),
            data_up: ElementBasis::tabulate(&basis_up, &data_rule.points),
            face: FaceTables::new(&basis, &face_rule),
            face_up: FaceTables::new(&basis_up, &face_rule),
            data_face: FaceTables::new(&basis, &data_face_rule),
            trace: eval_face_basis(degree, &face_rule.points),
            data_trace: eval_face_basis(degree, &data_face_rule.points),
            degree,
            basis,
            basis_up,
            cell_rule,
            face_rule,
            data_rule,
            data_face_rule,
        })
    }

    /// `dim P^k`.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `dim P^{k+1}`.
    pub fn dim_up(&self) -> usize {
        self.basis_up.dim()
    }

    /// Trace modes per face, `k + 1`.
    pub fn face_dim(&self) -> usize {
        self.degree + 1
    }

    /// Tables for a scalar field of degree `k` or `k + 1` at operator points.
    pub fn cell_tables(&self, degree: usize) -> &ElementBasis {
        if degree == self.degree {
            &self.cell
        } else {
            &self.cell_up
        }
    }

    pub fn face_tables(&self, degree: usize) -> &FaceTables {
        if degree == self.degree {
            &self.face
        } else {
            &self.face_up
        }
    }

    pub fn data_tables(&self, degree: usize) -> &ElementBasis {
        if degree == self.degree {
            &self.data
        } else {
            &self.data_up
        }
    }
}

/// Element geometry together with its place in the mesh.
#[derive(Clone, Debug)]
pub struct ElementFrame {
    pub index: usize,
    pub geometry: ElementGeometry,
    pub faces: [usize; 3],
    pub flipped: [bool; 3],
    pub boundary: [bool; 3],
}

impl ElementFrame {
    pub fn new(mesh: &Mesh, element: usize) -> Result<Self> {
        let geometry = mesh.element_geometry(element)?;
        let faces = mesh.element_faces(element);
        Ok(Self {
            index: element,
            geometry,
            faces,
            flipped: std::array::from_fn(|i| mesh.is_flipped(element, i)),
            boundary: std::array::from_fn(|i| mesh.is_boundary(faces[i])),
        })
    }

    pub fn all(mesh: &Mesh) -> Result<Vec<Self>> {
        (0..mesh.num_elements()).map(|e| Self::new(mesh, e)).collect()
    }

    /// Physical points of a triangle rule.
    pub fn cell_points(&self, rule: &TriangleRule) -> Vec<Point2<f64>> {
        rule.points.iter().map(|&p| self.geometry.map(p)).collect()
    }

    /// Physical points of an edge rule on local face `f`, ordered by the
    /// global face parameter.
    pub fn face_points(&self, f: usize, rule: &EdgeRule) -> Vec<Point2<f64>> {
        rule.points
            .iter()
            .map(|&s| self.geometry.map(face_reference_point(f, self.flipped[f], s)))
            .collect()
    }

    pub fn normal(&self, f: usize) -> Vector2<f64> {
        self.geometry.normals[f]
    }
}

/// Physical gradients of all basis functions at one tabulation point.
#[inline]
pub fn physical_gradients(table: &ElementBasis, geometry: &ElementGeometry, q: usize, out: &mut [[f64; 2]]) {
    let m = &geometry.inv_jacobian_t;
    for (i, o) in out.iter_mut().enumerate().take(table.dim) {
        let gx = table.grads[0][(i, q)];
        let gy = table.grads[1][(i, q)];
        *o = [m[(0, 0)] * gx + m[(0, 1)] * gy, m[(1, 0)] * gx + m[(1, 1)] * gy];
    }
}

/// `sum_i coeffs[i] * table[(i, q)]`.
#[inline]
pub fn eval_at(values: &DMatrix<f64>, coeffs: &[f64], q: usize) -> f64 {
    let col = values.column(q);
    coeffs.iter().zip(col.iter()).map(|(c, v)| c * v).sum()
}
