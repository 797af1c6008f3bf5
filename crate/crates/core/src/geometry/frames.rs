use nalgebra::{Matrix2, Matrix3};

use super::mesh::{facet_area_normal, Mesh, Point};
use crate::error::{Error, Result};

/// Nodal geometry of the boundary: normals, tangent bases, projectors and
/// the shape operator, for every boundary vertex.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub dim: usize,
    /// Boundary vertex ids, sorted.
    pub nodes: Vec<usize>,
    /// Position of each mesh vertex in `nodes`, if it lies on the boundary.
    pub slot: Vec<Option<usize>>,
    pub normal: Vec<Point>,
    /// One tangent per node in 2D, two orthonormal tangents in 3D.
    pub tangents: Vec<Vec<Point>>,
    pub projector: Vec<Matrix3<f64>>,
    /// Ambient shape operator `∂_T ν`, symmetric and annihilating `ν`.
    pub shape: Vec<Matrix3<f64>>,
}

/// Gradients of the barycentric coordinates along a boundary facet (ambient
/// vectors lying in the facet plane) and the facet measure.
pub fn facet_gradients(pts: &[Point], dim: usize) -> (Vec<Point>, f64) {
    if dim == 2 {
        let e = pts[1] - pts[0];
        let len = e.norm();
        let t = e / (len * len);
        (vec![-t, t], len)
    } else {
        let e1 = pts[1] - pts[0];
        let e2 = pts[2] - pts[0];
        let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e2.dot(&e1), e2.dot(&e2));
        let gi = g.try_inverse().unwrap_or_else(Matrix2::zeros);
        let g1 = e1 * gi[(0, 0)] + e2 * gi[(0, 1)];
        let g2 = e1 * gi[(1, 0)] + e2 * gi[(1, 1)];
        let area = 0.5 * e1.cross(&e2).norm();
        (vec![-(g1 + g2), g1, g2], area)
    }
}

impl BoundaryFrame {
    pub fn index_of(&self, vertex: usize) -> Result<usize> {
        self.slot
            .get(vertex)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Mesh(format!("vertex {vertex} has no boundary frame")))
    }

    pub fn normal_at(&self, vertex: usize) -> Result<Point> {
        Ok(self.normal[self.index_of(vertex)?])
    }

    /// Signed curvature `κ = τ·∂_s ν` (2D only).
    pub fn curvature(&self, vertex: usize) -> Result<f64> {
        let i = self.index_of(vertex)?;
        let t = self.tangents[i][0];
        Ok(t.dot(&(self.shape[i] * t)))
    }

    /// Shape operator in the local tangent basis (1×1 or 2×2).
    pub fn shape_local(&self, vertex: usize) -> Result<Vec<Vec<f64>>> {
        let i = self.index_of(vertex)?;
        let ts = &self.tangents[i];
        Ok(ts
            .iter()
            .map(|a| ts.iter().map(|b| a.dot(&(self.shape[i] * b))).collect())
            .collect())
    }

    /// Tangent direction of a 2D boundary node, `τ = rot90(ν)`.
    pub fn tangent(&self, vertex: usize) -> Result<Point> {
        Ok(self.tangents[self.index_of(vertex)?][0])
    }
}

fn tangent_basis(n: &Point, dim: usize) -> Vec<Point> {
    if dim == 2 {
        vec![Point::new(-n.y, n.x, 0.0)]
    } else {
        let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Point::x()
        } else if n.y.abs() <= n.z.abs() {
            Point::y()
        } else {
            Point::z()
        };
        let t1 = (axis - n * n.dot(&axis)).normalize();
        let t2 = n.cross(&t1);
        vec![t1, t2]
    }
}

fn ambient_projector(n: &Point, dim: usize) -> Matrix3<f64> {
    let mut id = Matrix3::identity();
    if dim == 2 {
        id[(2, 2)] = 0.0;
    }
    id - n * n.transpose()
}

/// Nodal normals by measure-weighted averaging of facet normals; shape
/// operator by averaging the tangential Jacobian of the interpolated nodal
/// normal field over incident facets, then projecting and symmetrizing.
pub fn compute_boundary_frames(mesh: &Mesh) -> Result<BoundaryFrame> {
    let dim = mesh.dim;
    let nodes = mesh.all_boundary_vertices();
    let mut slot = vec![None; mesh.vertices.len()];
    for (i, &v) in nodes.iter().enumerate() {
        slot[v] = Some(i);
    }
    let mut acc = vec![Point::zeros(); nodes.len()];
    for f in &mesh.boundary_facets {
        let an = facet_area_normal(&mesh.facet_points(f), dim);
        if an.norm() <= 0.0 {
            return Err(Error::Mesh(format!("degenerate boundary facet {:?}", f.vertices)));
        }
        for &v in &f.vertices {
            acc[slot[v].unwrap()] += an;
        }
    }
    let normal: Vec<Point> = acc
        .iter()
        .map(|a| {
            let n = a.norm();
            if n > 0.0 {
                Ok(a / n)
            } else {
                Err(Error::Mesh("boundary node with vanishing averaged normal".into()))
            }
        })
        .collect::<Result<_>>()?;
    let tangents: Vec<Vec<Point>> = normal.iter().map(|n| tangent_basis(n, dim)).collect();
    let projector: Vec<Matrix3<f64>> = normal.iter().map(|n| ambient_projector(n, dim)).collect();

    let mut jac = vec![Matrix3::zeros(); nodes.len()];
    let mut weight = vec![0.0; nodes.len()];
    for f in &mesh.boundary_facets {
        let (grads, meas) = facet_gradients(&mesh.facet_points(f), dim);
        let mut j = Matrix3::zeros();
        for (a, &v) in f.vertices.iter().enumerate() {
            j += normal[slot[v].unwrap()] * grads[a].transpose();
        }
        for &v in &f.vertices {
            let i = slot[v].unwrap();
            jac[i] += j * meas;
            weight[i] += meas;
        }
    }
    let shape = (0..nodes.len())
        .map(|i| {
            let p = projector[i];
            let s = p * (jac[i] / weight[i]) * p;
            0.5 * (s + s.transpose())
        })
        .collect();
    Ok(BoundaryFrame {
        dim,
        nodes,
        slot,
        normal,
        tangents,
        projector,
        shape,
    })
}
