use serde::{Deserialize, Serialize};

use super::frames::BoundaryFrame;
use super::mesh::{simplex_gradients, BoundaryLabel, Mesh, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DampingProfile {
    #[default]
    Constant,
    Ramp,
}

/// Damping collar near Γ0 and the auxiliary fields used by the multiplier
/// audits.
#[derive(Debug, Clone)]
pub struct RegionFields {
    pub eps: f64,
    pub a0: f64,
    pub profile: DampingProfile,
    /// Cells with a vertex closer than `eps` to Γ0; `a` is supported here.
    pub omega: Vec<bool>,
    pub omega_eps: Vec<bool>,
    /// Cells with a vertex closer than `eps/2` to Γ0.
    pub omega_half: Vec<bool>,
    pub x0: Point,
    pub delta: f64,
    /// `sup |x - x0|` over the mesh vertices.
    pub radius: f64,
    /// Per-cell damping coefficient.
    pub a_field: Vec<f64>,
    /// Nodal cutoff with values in [0, 1].
    pub xi_eps: Vec<f64>,
    /// Nodal vector field equal to ν on the boundary.
    pub k_field: Vec<Point>,
    /// Nodal distance to the Γ0 vertex set.
    pub dist_gamma0: Vec<f64>,
}

fn distance_to(points: &[Point], targets: &[Point]) -> Vec<f64> {
    points
        .iter()
        .map(|p| targets.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .collect()
}

pub fn build_region_fields(
    mesh: &Mesh,
    frames: &BoundaryFrame,
    x0: Point,
    delta: f64,
    eps: f64,
    a0: f64,
    profile: DampingProfile,
) -> Result<RegionFields> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if !(a0 > 0.0) {
        return Err(Error::Assumption(format!("damping floor a0 must be positive, got {a0}")));
    }
    let g0: Vec<Point> = mesh
        .boundary_vertices(BoundaryLabel::Gamma0)
        .iter()
        .map(|&v| mesh.vertices[v])
        .collect();
    let g1_ids = mesh.boundary_vertices(BoundaryLabel::Gamma1);
    let g1: Vec<Point> = g1_ids.iter().map(|&v| mesh.vertices[v]).collect();
    if g0.is_empty() || g1.is_empty() {
        return Err(Error::Geometry("both Γ0 and Γ1 must be present".into()));
    }
    let gap = distance_to(&g1, &g0).into_iter().fold(f64::INFINITY, f64::min);
    if eps >= gap {
        return Err(Error::RegionOverlap(format!(
            "eps = {eps} is not below dist(Γ0, Γ1) = {gap:.6}"
        )));
    }
    let dist = distance_to(&mesh.vertices, &g0);
    let min_vertex = |c: &Vec<usize>| c.iter().map(|&v| dist[v]).fold(f64::INFINITY, f64::min);
    let omega: Vec<bool> = mesh.cells.iter().map(|c| min_vertex(c) < eps).collect();
    let omega_half: Vec<bool> = mesh.cells.iter().map(|c| min_vertex(c) < 0.5 * eps).collect();
    let mut on_g1 = vec![false; mesh.vertices.len()];
    for &v in &g1_ids {
        on_g1[v] = true;
    }
    if mesh
        .cells
        .iter()
        .zip(&omega)
        .any(|(c, &w)| w && c.iter().any(|&v| on_g1[v]))
    {
        return Err(Error::RegionOverlap(format!(
            "the eps = {eps} collar reaches cells touching Γ1 at this resolution"
        )));
    }

    let a_field = mesh
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let dc = cell.iter().map(|&v| dist[v]).sum::<f64>() / cell.len() as f64;
            match (profile, omega[c]) {
                (DampingProfile::Constant, true) => a0,
                (DampingProfile::Constant, false) => 0.0,
                (DampingProfile::Ramp, true) => a0 * (1.0 + (1.0 - dc / eps).max(0.0)),
                (DampingProfile::Ramp, false) => a0 * (1.0 - (dc - eps) / eps).max(0.0),
            }
        })
        .collect();

    // s ramps from 1 at depth eps/2 to 0 at depth eps; squaring keeps
    // |∇ξ|²/ξ bounded at the outer edge of the support.
    let mut xi_eps: Vec<f64> = dist
        .iter()
        .map(|&d| {
            let s = ((eps - d) / (0.5 * eps)).clamp(0.0, 1.0);
            s * s
        })
        .collect();
    for (cell, &half) in mesh.cells.iter().zip(&omega_half) {
        if half {
            for &v in cell {
                xi_eps[v] = 1.0;
            }
        }
    }

    let boundary: Vec<(Point, Point)> = frames
        .nodes
        .iter()
        .zip(&frames.normal)
        .map(|(&v, n)| (mesh.vertices[v], *n))
        .collect();
    let k_field = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if let Some(i) = frames.slot[v] {
                return frames.normal[i];
            }
            let (d, n) = boundary
                .iter()
                .map(|(q, n)| ((p - q).norm(), *n))
                .fold((f64::INFINITY, Point::zeros()), |acc, x| if x.0 < acc.0 { x } else { acc });
            n * (1.0 - d / eps).max(0.0)
        })
        .collect();

    let radius = mesh.vertices.iter().map(|p| (p - x0).norm()).fold(0.0, f64::max);
    Ok(RegionFields {
        eps,
        a0,
        profile,
        omega_eps: omega.clone(),
        omega,
        omega_half,
        x0,
        delta,
        radius,
        a_field,
        xi_eps,
        k_field,
        dist_gamma0: dist,
    })
}

impl RegionFields {
    /// Largest per-cell value of `|∇ξ|² / ξ̄` over cells with positive mean
    /// cutoff `ξ̄`.
    pub fn xi_gradient_ratio(&self, mesh: &Mesh) -> f64 {
        let mut worst: f64 = 0.0;
        for cell in &mesh.cells {
            let mean = cell.iter().map(|&v| self.xi_eps[v]).sum::<f64>() / cell.len() as f64;
            if mean <= 0.0 {
                continue;
            }
            let pts: Vec<Point> = cell.iter().map(|&v| mesh.vertices[v]).collect();
            let (grads, _) = simplex_gradients(&pts, mesh.dim);
            let g = cell
                .iter()
                .zip(&grads)
                .fold(Point::zeros(), |acc, (&v, gr)| acc + gr * self.xi_eps[v]);
            worst = worst.max(g.norm_squared() / mean);
        }
        worst
    }

    /// Nodes belonging to at least one collar cell.
    pub fn omega_nodes(&self, mesh: &Mesh) -> Vec<bool> {
        let mut in_omega = vec![false; mesh.vertices.len()];
        for (cell, &w) in mesh.cells.iter().zip(&self.omega) {
            if w {
                for &v in cell {
                    in_omega[v] = true;
                }
            }
        }
        in_omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, classify_boundary, compute_boundary_frames, MeshKind};

    fn setup(h: f64, eps: f64, profile: DampingProfile) -> (Mesh, RegionFields) {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, h).unwrap();
        let m = classify_boundary(&m, &Point::zeros(), 1.0).unwrap();
        let fr = compute_boundary_frames(&m).unwrap();
        let r = build_region_fields(&m, &fr, Point::zeros(), 1.0, eps, 1.0, profile).unwrap();
        (m, r)
    }

    #[test]
    fn collar_nesting_and_gamma0_cells() {
        let (m, r) = setup(0.125, 0.3, DampingProfile::Constant);
        let g0 = m.boundary_vertices(BoundaryLabel::Gamma0);
        for (c, cell) in m.cells.iter().enumerate() {
            assert!(!r.omega_half[c] || r.omega_eps[c]);
            assert!(!r.omega_eps[c] || r.omega[c]);
            if cell.iter().any(|v| g0.binary_search(v).is_ok()) {
                assert!(r.omega_half[c]);
            }
            if r.omega[c] {
                assert!(r.a_field[c] >= 1.0);
                let rmax = cell.iter().map(|&v| m.vertices[v].norm()).fold(0.0, f64::max);
                assert!(rmax > 1.7 - 1e-9);
            } else {
                assert_eq!(r.a_field[c], 0.0);
            }
        }
    }

    #[test]
    fn cutoff_plateau_and_support() {
        let (m, r) = setup(0.125, 0.3, DampingProfile::Constant);
        let in_omega = r.omega_nodes(&m);
        for (v, p) in m.vertices.iter().enumerate() {
            let xi = r.xi_eps[v];
            assert!((0.0..=1.0).contains(&xi));
            if !in_omega[v] {
                assert_eq!(xi, 0.0);
            }
            if (p.norm() - 2.0).abs() < 1e-12 {
                assert_eq!(xi, 1.0);
            }
            if (p.norm() - 1.6).abs() < 1e-9 {
                assert_eq!(xi, 0.0);
            }
        }
        let ratio = r.xi_gradient_ratio(&m) * r.eps * r.eps;
        assert!(ratio.is_finite() && ratio < 100.0, "scaled ratio {ratio}");
    }

    #[test]
    fn k_field_matches_normal_and_vanishes_inside() {
        let (m, r) = setup(0.125, 0.3, DampingProfile::Constant);
        let fr = compute_boundary_frames(&m).unwrap();
        for (i, &v) in fr.nodes.iter().enumerate() {
            assert!((r.k_field[v] - fr.normal[i]).norm() < 1e-12);
        }
        for (v, p) in m.vertices.iter().enumerate() {
            let rad = p.norm();
            if rad > 1.0 + 0.3 + 1e-9 && rad < 1.7 - 1e-9 {
                assert_eq!(r.k_field[v], Point::zeros());
            }
        }
    }

    #[test]
    fn ramp_profile_dominates_floor() {
        let (_, r) = setup(0.125, 0.3, DampingProfile::Ramp);
        for (c, &w) in r.omega.iter().enumerate() {
            assert!(r.a_field[c] >= 0.0);
            if w {
                assert!(r.a_field[c] >= r.a0);
            }
        }
    }

    #[test]
    fn wide_collar_overlaps() {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.25).unwrap();
        let m = classify_boundary(&m, &Point::zeros(), 1.0).unwrap();
        let fr = compute_boundary_frames(&m).unwrap();
        let err = build_region_fields(&m, &fr, Point::zeros(), 1.0, 1.2, 1.0, DampingProfile::Constant);
        assert!(matches!(err, Err(Error::RegionOverlap(_))));
    }
}
