use super::mesh::{BoundaryLabel, Mesh, Point};
use crate::error::{Error, Result};

/// `(x_c - x0)·ν` at the centroid of every boundary facet, in facet order.
pub fn facet_support_values(mesh: &Mesh, x0: &Point) -> Vec<f64> {
    mesh.boundary_facets
        .iter()
        .map(|f| (mesh.facet_centroid(f) - x0).dot(&mesh.facet_normal(f)))
        .collect()
}

/// Relabels the boundary by the star-shaped sign conditions: a facet is Γ0
/// when `(x_c - x0)·ν ≥ δ` and Γ1 when `(x_c - x0)·ν ≤ 0`. Facets falling in
/// between are rejected rather than guessed.
pub fn classify_boundary(mesh: &Mesh, x0: &Point, delta: f64) -> Result<Mesh> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("delta must be positive, got {delta}")));
    }
    let values = facet_support_values(mesh, x0);
    let mut out = mesh.clone();
    for (f, &s) in out.boundary_facets.iter_mut().zip(&values) {
        f.label = if s >= delta {
            BoundaryLabel::Gamma0
        } else if s <= 0.0 {
            BoundaryLabel::Gamma1
        } else {
            return Err(Error::Geometry(format!(
                "facet {:?} has (x - x0)·ν = {s:.6} inside (0, {delta})",
                f.vertices
            )));
        };
    }
    let n0 = out.boundary_facets.iter().filter(|f| f.label == BoundaryLabel::Gamma0).count();
    if n0 == 0 {
        return Err(Error::Geometry("no facet satisfies the Γ0 condition".into()));
    }
    if n0 == out.boundary_facets.len() {
        return Err(Error::Geometry("Γ1 is empty; the acoustic boundary is required".into()));
    }
    let g0 = out.boundary_vertices(BoundaryLabel::Gamma0);
    let g1 = out.boundary_vertices(BoundaryLabel::Gamma1);
    if g0.iter().any(|v| g1.binary_search(v).is_ok()) {
        return Err(Error::Geometry("closures of Γ0 and Γ1 intersect".into()));
    }
    Ok(out)
}
