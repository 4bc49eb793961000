//! Conforming triangulations of planar domains with face connectivity.
//!
//! Elements are counter-clockwise vertex triples. Local face `i` of an element
//! is the edge `(v[i], v[(i + 1) % 3])`. Faces are numbered in order of first
//! appearance while sweeping the elements, and each face keeps the vertex order
//! (and therefore the outward normal) of the lowest-indexed incident element.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{HdgError, Result};

/// Incident element and its local face index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceSide {
    pub element: usize,
    pub local_face: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceAdjacency {
    /// Lower-indexed incident element; its outward normal is the face normal.
    pub first: FaceSide,
    /// The neighbour across the face, `None` on the boundary.
    pub second: Option<FaceSide>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point2<f64>>,
    elements: Vec<[usize; 3]>,
    faces: Vec<[usize; 2]>,
    face_adjacency: Vec<FaceAdjacency>,
    boundary_mask: Vec<bool>,
    element_faces: Vec<[usize; 3]>,
    h_max: f64,
}

/// Affine map data of one triangle.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub vertices: [Point2<f64>; 3],
    /// Columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: Matrix2<f64>,
    pub det: f64,
    /// `J^{-T}`, maps reference gradients to physical gradients.
    pub inv_jacobian_t: Matrix2<f64>,
    pub normals: [Vector2<f64>; 3],
    pub face_lengths: [f64; 3],
}

impl ElementGeometry {
    pub fn from_vertices(vertices: [Point2<f64>; 3]) -> Result<Self> {
        let e1 = vertices[1] - vertices[0];
        let e2 = vertices[2] - vertices[0];
        let jacobian = Matrix2::new(e1.x, e2.x, e1.y, e2.y);
        let det = jacobian.determinant();
        if !(det > 0.0) {
            return Err(HdgError::InvalidMesh(format!(
                "triangle with non-positive signed area {}",
                0.5 * det
            )));
        }
        let inv_jacobian_t = jacobian
            .try_inverse()
            .ok_or_else(|| HdgError::InvalidMesh("degenerate triangle".into()))?
            .transpose();
        let mut normals = [Vector2::zeros(); 3];
        let mut face_lengths = [0.0; 3];
        for i in 0..3 {
            let d = vertices[(i + 1) % 3] - vertices[i];
            let len = d.x.hypot(d.y);
            face_lengths[i] = len;
            normals[i] = Vector2::new(d.y / len, -d.x / len);
        }
        Ok(Self {
            vertices,
            jacobian,
            det,
            inv_jacobian_t,
            normals,
            face_lengths,
        })
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn diameter(&self) -> f64 {
        self.face_lengths.iter().cloned().fold(0.0, f64::max)
    }

    /// Reference coordinates to physical coordinates.
    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> Point2<f64> {
        self.vertices[0] + self.jacobian * Vector2::new(xi[0], xi[1])
    }

    #[inline]
    pub fn physical_gradient(&self, ref_grad: [f64; 2]) -> Vector2<f64> {
        self.inv_jacobian_t * Vector2::new(ref_grad[0], ref_grad[1])
    }

    pub fn centroid(&self) -> Point2<f64> {
        Point2::from((self.vertices[0].coords + self.vertices[1].coords + self.vertices[2].coords) / 3.0)
    }
}

impl Mesh {
    /// Uniform triangulation of the unit square: `n x n` cells, each split
    /// along its lower-left to upper-right diagonal.
    pub fn uniform_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(HdgError::InvalidArgument(
                "uniform mesh needs at least one subdivision".into(),
            ));
        }
        let stride = n + 1;
        let vertices = (0..stride)
            .flat_map(|j| (0..stride).map(move |i| Point2::new(i as f64 / n as f64, j as f64 / n as f64)))
            .collect();
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = j * stride + i;
                let b = a + 1;
                let c = b + stride;
                let d = a + stride;
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            }
        }
        Self::from_elements(vertices, elements)
    }

    /// Builds connectivity from raw vertices and counter-clockwise triangles.
    pub fn from_elements(vertices: Vec<Point2<f64>>, elements: Vec<[usize; 3]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(HdgError::InvalidMesh("no elements".into()));
        }
        let mut h_max = 0.0f64;
        for (e, tri) in elements.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(HdgError::InvalidMesh(format!(
                        "element {e} references vertex {v} of {}",
                        vertices.len()
                    )));
                }
            }
            let geom = ElementGeometry::from_vertices([vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]])
                .map_err(|err| HdgError::InvalidMesh(format!("element {e}: {err}")))?;
            h_max = h_max.max(geom.diameter());
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::new();
        let mut face_adjacency: Vec<FaceAdjacency> = Vec::new();
        let mut element_faces = vec![[0usize; 3]; elements.len()];
        for (e, tri) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let side = FaceSide {
                    element: e,
                    local_face: i,
                };
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, faces.len());
                        element_faces[e][i] = faces.len();
                        faces.push([a, b]);
                        face_adjacency.push(FaceAdjacency {
                            first: side,
                            second: None,
                        });
                    }
                    Some(&f) => {
                        let adj = &mut face_adjacency[f];
                        if adj.second.is_some() {
                            return Err(HdgError::InvalidMesh(format!(
                                "face ({a}, {b}) shared by more than two elements"
                            )));
                        }
                        if faces[f] != [b, a] {
                            return Err(HdgError::InvalidMesh(format!(
                                "inconsistent orientation across face ({a}, {b})"
                            )));
                        }
                        adj.second = Some(side);
                        element_faces[e][i] = f;
                    }
                }
            }
        }
        let boundary_mask = face_adjacency.iter().map(|a| a.second.is_none()).collect();
        Ok(Self {
            vertices,
            elements,
            faces,
            face_adjacency,
            boundary_mask,
            element_faces,
            h_max,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_interior_faces(&self) -> usize {
        self.boundary_mask.iter().filter(|b| !**b).count()
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn faces(&self) -> &[[usize; 2]] {
        &self.faces
    }

    pub fn face_adjacency(&self) -> &[FaceAdjacency] {
        &self.face_adjacency
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn is_boundary(&self, face: usize) -> bool {
        self.boundary_mask[face]
    }

    /// Global face indices of the three local faces of an element.
    pub fn element_faces(&self, element: usize) -> [usize; 3] {
        self.element_faces[element]
    }

    /// Maximum element diameter.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn element_geometry(&self, element: usize) -> Result<ElementGeometry> {
        let tri = self.elements.get(element).ok_or(HdgError::IndexOutOfRange {
            what: "element",
            index: element,
            len: self.elements.len(),
        })?;
        ElementGeometry::from_vertices([self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]])
    }

    /// True when local face `i` of `element` runs against the stored face orientation.
    pub fn is_flipped(&self, element: usize, local_face: usize) -> bool {
        let tri = self.elements[element];
        let face = self.faces[self.element_faces[element][local_face]];
        face[0] != tri[local_face]
    }

    /// Unit normal of a face, outward from its first incident element.
    pub fn face_normal(&self, face: usize) -> Vector2<f64> {
        let [a, b] = self.faces[face];
        let d = self.vertices[b] - self.vertices[a];
        Vector2::new(d.y, -d.x) / d.x.hypot(d.y)
    }

    /// Point on a face at parameter `s` in `[0, 1]`, measured from its first vertex.
    pub fn face_point(&self, face: usize, s: f64) -> Point2<f64> {
        let [a, b] = self.faces[face];
        self.vertices[a] + (self.vertices[b] - self.vertices[a]) * s
    }

    pub fn face_length(&self, face: usize) -> f64 {
        let [a, b] = self.faces[face];
        let d = self.vertices[b] - self.vertices[a];
        d.x.hypot(d.y)
    }

    /// Writes the plain-text mesh format: a header `nv ne nf`, then vertex lines
    /// `x y`, element lines `v0 v1 v2` and face lines `v0 v1 b`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.num_vertices(),
            self.num_elements(),
            self.num_faces()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{:e} {:e}", v.x, v.y);
        }
        for t in &self.elements {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for (f, [a, b]) in self.faces.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", a, b, u8::from(self.boundary_mask[f]));
        }
        out
    }

    /// Parses the plain-text mesh format. The face section is validated
    /// against the connectivity derived from the elements.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| HdgError::Parse(format!("unexpected end of input reading {what}")))?
                .parse::<usize>()
                .map_err(|e| HdgError::Parse(format!("{what}: {e}")))
        };
        let nv = next_usize("vertex count")?;
        let ne = next_usize("element count")?;
        let nf = next_usize("face count")?;
        let mut rest = text.split_whitespace().skip(3);
        let mut next_f64 = |what: &str| -> Result<f64> {
            rest.next()
                .ok_or_else(|| HdgError::Parse(format!("unexpected end of input reading {what}")))?
                .parse::<f64>()
                .map_err(|e| HdgError::Parse(format!("{what}: {e}")))
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = next_f64("vertex x")?;
            let y = next_f64("vertex y")?;
            vertices.push(Point2::new(x, y));
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let mut tri = [0usize; 3];
            for v in tri.iter_mut() {
                *v = next_f64("element vertex")? as usize;
            }
            elements.push(tri);
        }
        let mut listed = Vec::with_capacity(nf);
        for _ in 0..nf {
            let a = next_f64("face vertex")? as usize;
            let b = next_f64("face vertex")? as usize;
            let flag = next_f64("boundary flag")?;
            listed.push(((a.min(b), a.max(b)), flag != 0.0));
        }
        let mesh = Self::from_elements(vertices, elements)?;
        if listed.len() != mesh.num_faces() {
            return Err(HdgError::InvalidMesh(format!(
                "file lists {} faces, connectivity has {}",
                listed.len(),
                mesh.num_faces()
            )));
        }
        let derived: HashMap<(usize, usize), bool> = mesh
            .faces
            .iter()
            .zip(&mesh.boundary_mask)
            .map(|(&[a, b], &bnd)| ((a.min(b), a.max(b)), bnd))
            .collect();
        for (key, bnd) in listed {
            match derived.get(&key) {
                Some(&d) if d == bnd => {}
                Some(_) => {
                    return Err(HdgError::InvalidMesh(format!(
                        "boundary flag of face {key:?} disagrees with connectivity"
                    )))
                }
                None => return Err(HdgError::InvalidMesh(format!("face {key:?} not in any element"))),
            }
        }
        Ok(mesh)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_counts() {
        let m = Mesh::uniform_square(1).unwrap();
        assert_eq!((m.num_elements(), m.num_vertices(), m.num_faces()), (2, 4, 5));
        assert_eq!(m.num_interior_faces(), 1);
    }

    #[test]
    fn n4_counts_and_euler() {
        let m = Mesh::uniform_square(4).unwrap();
        assert_eq!((m.num_elements(), m.num_vertices(), m.num_faces()), (32, 25, 56));
        let euler = m.num_vertices() as i64 - m.num_faces() as i64 + m.num_elements() as i64;
        assert_eq!(euler, 1);
        assert!((m.h_max() - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn fine_mesh_element_count() {
        let m = Mesh::uniform_square(256).unwrap();
        assert_eq!(m.num_elements(), 131072);
    }

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(Mesh::uniform_square(0).is_err());
    }

    #[test]
    fn reference_triangle_geometry() {
        let g = ElementGeometry::from_vertices([Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)])
            .unwrap();
        assert_eq!(g.area(), 0.5);
        let s = 1.0 / 2f64.sqrt();
        assert!((g.normals[1] - Vector2::new(s, s)).norm() < 1e-15);
        assert_eq!(g.normals[0], Vector2::new(0.0, -1.0));
        assert_eq!(g.normals[2], Vector2::new(-1.0, 0.0));
    }

    #[test]
    fn uniform_areas_and_orientation() {
        for n in [1, 2, 3, 7, 16] {
            let m = Mesh::uniform_square(n).unwrap();
            let mut total = 0.0;
            for e in 0..m.num_elements() {
                let g = m.element_geometry(e).unwrap();
                assert!(g.det > 0.0);
                assert!(((g.area() - 0.5 / (n * n) as f64) * (n * n) as f64).abs() < 1e-12);
                total += g.area();
            }
            assert!((total - 1.0).abs() < 1e-14);
        }
        let m = Mesh::uniform_square(2).unwrap();
        for e in 0..m.num_elements() {
            assert!((m.element_geometry(e).unwrap().area() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn shared_normals_negate_exactly() {
        let m = Mesh::uniform_square(2).unwrap();
        assert_eq!(m.num_interior_faces(), 8);
        for (f, adj) in m.face_adjacency().iter().enumerate() {
            let g1 = m.element_geometry(adj.first.element).unwrap();
            let n1 = g1.normals[adj.first.local_face];
            for i in 0..2 {
                assert_eq!(n1[i], m.face_normal(f)[i]);
            }
            if let Some(s) = adj.second {
                assert!(s.element > adj.first.element);
                let n2 = m.element_geometry(s.element).unwrap().normals[s.local_face];
                assert_eq!(n1, -n2);
            }
        }
    }

    #[test]
    fn adjacency_is_an_involution() {
        let m = Mesh::uniform_square(5).unwrap();
        for (f, adj) in m.face_adjacency().iter().enumerate() {
            for side in std::iter::once(adj.first).chain(adj.second) {
                assert_eq!(m.element_faces(side.element)[side.local_face], f);
            }
            assert_eq!(m.is_boundary(f), adj.second.is_none());
        }
        for e in 0..m.num_elements() {
            for i in 0..3 {
                let f = m.element_faces(e)[i];
                let adj = m.face_adjacency()[f];
                let hit = adj.first
                    == FaceSide {
                        element: e,
                        local_face: i,
                    }
                    || adj.second
                        == Some(FaceSide {
                            element: e,
                            local_face: i,
                        });
                assert!(hit);
                assert_eq!(m.is_flipped(e, i), adj.first.element != e);
            }
        }
    }

    #[test]
    fn out_of_range_element() {
        let m = Mesh::uniform_square(1).unwrap();
        assert!(matches!(m.element_geometry(2), Err(HdgError::IndexOutOfRange { .. })));
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::uniform_square(3).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.elements(), m.elements());
        assert_eq!(back.faces(), m.faces());
        assert_eq!(back.boundary_mask(), m.boundary_mask());
        assert_eq!(back.vertices(), m.vertices());
    }

    #[test]
    fn text_rejects_bad_boundary_flag() {
        let m = Mesh::uniform_square(1).unwrap();
        let text = m.to_text().replace("3 0 0", "3 0 1");
        assert!(Mesh::from_text(&text).is_err());
    }

    #[test]
    fn clockwise_element_rejected() {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(Mesh::from_elements(v, vec![[0, 2, 1]]).is_err());
    }
}
