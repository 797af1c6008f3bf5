#![allow(dead_code)]

use std::f64::consts::PI;

use elastowave::geometry::{
    build_mesh, classify_boundary, compute_boundary_frames, BoundaryFrame, BoundaryLabel, Mesh, MeshKind, Point,
};
use elastowave::tangential::Gamma1Layout;

/// Annulus `1 ≤ r ≤ 2` with Γ0 outside and Γ1 inside.
pub fn annulus(h: f64) -> Mesh {
    let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, h).unwrap();
    classify_boundary(&m, &Point::zeros(), 1.0).unwrap()
}

/// Moves the inner-ring vertices along the unit circle by
/// `δθ = 0.25 (2π/n) sin 2θ`, so consecutive Γ1 facets differ in length.
pub fn jitter_inner_ring(mut mesh: Mesh) -> Mesh {
    let ring = mesh.boundary_vertices(BoundaryLabel::Gamma1);
    let n = ring.len() as f64;
    for v in ring {
        let p = mesh.vertices[v];
        let th = p.y.atan2(p.x);
        let th = th + 0.25 * (2.0 * PI / n) * (2.0 * th).sin();
        let r = p.norm();
        mesh.vertices[v] = Point::new(r * th.cos(), r * th.sin(), 0.0);
    }
    mesh.validate().unwrap();
    mesh
}

pub fn boundary_setup(mesh: &Mesh) -> (BoundaryFrame, Gamma1Layout) {
    (compute_boundary_frames(mesh).unwrap(), Gamma1Layout::new(mesh))
}

/// Polar angle of the Γ1 node in slot `i`.
pub fn node_angle(mesh: &Mesh, layout: &Gamma1Layout, i: usize) -> f64 {
    let p = mesh.vertices[layout.nodes[i]];
    p.y.atan2(p.x)
}

/// Empirical order `log(e_c/e_f)/log(h_c/h_f)`.
pub fn order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}
