//! Meshes, boundary classification, boundary frames and damping regions.

mod classify;
mod frames;
mod mesh;
mod region;

pub use classify::{classify_boundary, facet_support_values};
pub use frames::{compute_boundary_frames, facet_gradients, BoundaryFrame};
pub use mesh::{
    build_disk, build_mesh, facet_area_normal, simplex_gradients, BoundaryFacet, BoundaryLabel, Mesh,
    MeshKind, Point,
};
pub use region::{build_region_fields, DampingProfile, RegionFields};
