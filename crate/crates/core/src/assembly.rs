//! Bulk elasticity forms, trace coupling, the energy Gram matrix and the
//! resolvent system.
//!
//! Bulk unknowns are P1 vector fields stored vertex-major (`d` components
//! per vertex). Γ0 vertices are eliminated; the retained ("free") vertices
//! keep their relative order.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::State;
use crate::geometry::{simplex_gradients, BoundaryFrame, BoundaryLabel, Mesh, Point, RegionFields};
use crate::linalg::{combine, matvec, matvec_t, quad, SparseMatrix, Triplets};
use crate::tangential::{
    assemble_boundary_forms, p1_mass, BoundaryCoefficients, BoundaryOperators, Gamma1Layout,
};

#[derive(Debug, Clone)]
pub struct MaterialParams {
    pub lambda: f64,
    /// Shear modulus; also the μ of the tangential stress.
    pub alpha: f64,
    pub coefficients: BoundaryCoefficients,
    /// Per-cell damping coefficient.
    pub a_field: Vec<f64>,
}

/// Map between mesh vertices and the Γ0-constrained bulk unknowns.
#[derive(Debug, Clone, Serialize)]
pub struct FreeMap {
    pub dim: usize,
    /// Retained vertex ids in increasing order.
    pub free_vertices: Vec<usize>,
    /// Compact index of each vertex, `None` on Γ0.
    pub index: Vec<Option<usize>>,
}

impl FreeMap {
    pub fn new(mesh: &Mesh) -> Self {
        let g0 = mesh.boundary_vertices(BoundaryLabel::Gamma0);
        let mut index = vec![None; mesh.vertices.len()];
        let mut free_vertices = Vec::new();
        for v in 0..mesh.vertices.len() {
            if g0.binary_search(&v).is_err() {
                index[v] = Some(free_vertices.len());
                free_vertices.push(v);
            }
        }
        Self {
            dim: mesh.dim,
            free_vertices,
            index,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dim * self.free_vertices.len()
    }

    /// Constrained dof of component `i` at mesh vertex `v`.
    #[inline]
    pub fn dof(&self, v: usize, i: usize) -> Option<usize> {
        self.index[v].map(|k| self.dim * k + i)
    }

    /// Expands a constrained vector to all vertices (zeros on Γ0).
    pub fn expand(&self, u: &[f64]) -> Vec<Point> {
        let mut out = vec![Point::zeros(); self.index.len()];
        for (k, &v) in self.free_vertices.iter().enumerate() {
            for i in 0..self.dim {
                out[v][i] = u[self.dim * k + i];
            }
        }
        out
    }

    /// Restricts nodal vectors to the constrained layout (Γ0 values dropped).
    pub fn restrict(&self, field: &[Point]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs()];
        for (k, &v) in self.free_vertices.iter().enumerate() {
            for i in 0..self.dim {
                u[self.dim * k + i] = field[v][i];
            }
        }
        u
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("free map serializes")
    }
}

/// Bulk forms with and without the Γ0 elimination.
#[derive(Debug, Clone)]
pub struct BulkMatrices {
    pub mass_full: SparseMatrix,
    pub stiffness_full: SparseMatrix,
    pub damping_full: SparseMatrix,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub damping: SparseMatrix,
    pub free: FreeMap,
}

/// Element stiffness entry for components `i` (row, vertex `a`) and `j`
/// (column, vertex `b`).
#[inline]
pub fn elastic_entry(ga: &Point, gb: &Point, i: usize, j: usize, alpha: f64, lambda: f64) -> f64 {
    let dd = if i == j { ga.dot(gb) } else { 0.0 };
    alpha * (dd + ga[j] * gb[i]) + lambda * (ga[i] * gb[j])
}

pub fn assemble_bulk(mesh: &Mesh, lambda: f64, alpha: f64, a_field: &[f64]) -> Result<BulkMatrices> {
    if !(lambda > 0.0 && alpha > 0.0) {
        return Err(Error::Parameter(format!("Lamé constants must be positive, got λ={lambda}, α={alpha}")));
    }
    if a_field.len() != mesh.cells.len() {
        return Err(Error::Parameter("damping field must have one value per cell".into()));
    }
    if let Some(a) = a_field.iter().find(|&&a| !(a >= 0.0)) {
        return Err(Error::Assumption(format!("damping coefficient {a} is negative")));
    }
    let d = mesh.dim;
    let nfull = d * mesh.vertices.len();
    let free = FreeMap::new(mesh);
    let nc = free.n_dofs();
    let cells: Vec<usize> = (0..mesh.cells.len()).collect();
    let parts: Vec<[Triplets; 6]> = cells
        .par_chunks(256)
        .map(|chunk| {
            let mut t: [Triplets; 6] = std::array::from_fn(|k| {
                if k < 3 {
                    Triplets::new(nfull, nfull)
                } else {
                    Triplets::new(nc, nc)
                }
            });
            for &c in chunk {
                let cell = &mesh.cells[c];
                let (grads, vol) = simplex_gradients(&mesh.cell_points(c), d);
                for a in 0..=d {
                    for b in 0..=d {
                        let m = p1_mass(vol, d, a, b);
                        let (va, vb) = (cell[a], cell[b]);
                        for i in 0..d {
                            for j in 0..d {
                                let k = vol * elastic_entry(&grads[a], &grads[b], i, j, alpha, lambda);
                                t[1].push(d * va + i, d * vb + j, k);
                                if let (Some(r), Some(s)) = (free.dof(va, i), free.dof(vb, j)) {
                                    t[4].push(r, s, k);
                                }
                            }
                            t[0].push(d * va + i, d * vb + i, m);
                            t[2].push(d * va + i, d * vb + i, a_field[c] * m);
                            if let (Some(r), Some(s)) = (free.dof(va, i), free.dof(vb, i)) {
                                t[3].push(r, s, m);
                                t[5].push(r, s, a_field[c] * m);
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    let mut all: [Triplets; 6] = std::array::from_fn(|k| {
        if k < 3 {
            Triplets::new(nfull, nfull)
        } else {
            Triplets::new(nc, nc)
        }
    });
    for p in parts {
        for (acc, part) in all.iter_mut().zip(p) {
            acc.extend(part);
        }
    }
    Ok(BulkMatrices {
        mass_full: all[0].to_csr(),
        stiffness_full: all[1].to_csr(),
        damping_full: all[2].to_csr(),
        mass: all[3].to_csr(),
        stiffness: all[4].to_csr(),
        damping: all[5].to_csr(),
        free,
    })
}

/// Trace coupling `B`, of size `n_z × n_u`: row `(a, c)` pairs the boundary
/// hat function at Γ1 node `a` carrying direction `e_{a,c}` with the bulk
/// trace, so `wᵀ B v = ∫_{Γ1} w·v` for the interpolated ambient `w`.
pub fn assemble_coupling(mesh: &Mesh, layout: &Gamma1Layout, frames: &BoundaryFrame, free: &FreeMap) -> SparseMatrix {
    let d = mesh.dim;
    let mut t = Triplets::new(layout.n_dofs(), free.n_dofs());
    for &fi in &layout.facets {
        let f = &mesh.boundary_facets[fi];
        let meas = mesh.facet_measure(f);
        for (a, &va) in f.vertices.iter().enumerate() {
            let sa = layout.slot[va].expect("Γ1 vertex");
            for (b, &vb) in f.vertices.iter().enumerate() {
                let m = p1_mass(meas, d - 1, a, b);
                for c in 0..d {
                    let e = layout.direction(frames, sa, c);
                    for k in 0..d {
                        if let Some(col) = free.dof(vb, k) {
                            t.push(layout.dof(sa, c), col, m * e[k]);
                        }
                    }
                }
            }
        }
    }
    t.to_csr()
}

/// Component-wise Γ1 trace mass on the constrained bulk space:
/// `uᵀ T u = ∫_{Γ1} |u|²`.
pub fn assemble_trace_mass(mesh: &Mesh, free: &FreeMap) -> SparseMatrix {
    let d = mesh.dim;
    let mut t = Triplets::new(free.n_dofs(), free.n_dofs());
    for f in mesh.boundary_facets.iter().filter(|f| f.label == BoundaryLabel::Gamma1) {
        let meas = mesh.facet_measure(f);
        for (a, &va) in f.vertices.iter().enumerate() {
            for (b, &vb) in f.vertices.iter().enumerate() {
                let m = p1_mass(meas, d - 1, a, b);
                for i in 0..d {
                    if let (Some(r), Some(s)) = (free.dof(va, i), free.dof(vb, i)) {
                        t.push(r, s, m);
                    }
                }
            }
        }
    }
    t.to_csr()
}

/// Every matrix the dynamics and the analysis need.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub dim: usize,
    pub bulk: BulkMatrices,
    pub boundary: BoundaryOperators,
    /// `H_h + K_elastic + K_LB`.
    pub boundary_stiffness: SparseMatrix,
    pub coupling: SparseMatrix,
    pub trace_mass: SparseMatrix,
    pub layout: Gamma1Layout,
    pub lambda: f64,
    pub alpha: f64,
    pub h0: f64,
    pub coefficients: BoundaryCoefficients,
    pub a_field: Vec<f64>,
}

impl SystemMatrices {
    pub fn n_u(&self) -> usize {
        self.bulk.free.n_dofs()
    }

    pub fn n_z(&self) -> usize {
        self.layout.n_dofs()
    }

    pub fn free(&self) -> &FreeMap {
        &self.bulk.free
    }

    /// Energy inner product `⟨U1, U2⟩_ℍ = U1ᵀ G_H U2` with
    /// `G_H = blkdiag(K_Ω, M_Ω, H_h + K_elastic + K_LB, M_f)`.
    pub fn inner(&self, a: &State, b: &State) -> f64 {
        let ku = matvec(&self.bulk.stiffness, &b.u);
        let mv = matvec(&self.bulk.mass, &b.v);
        let kz = matvec(&self.boundary_stiffness, &b.z);
        let mw = matvec(&self.boundary.m_f, &b.w);
        crate::linalg::dot(&a.u, &ku)
            + crate::linalg::dot(&a.v, &mv)
            + crate::linalg::dot(&a.z, &kz)
            + crate::linalg::dot(&a.w, &mw)
    }

    pub fn norm_sq(&self, a: &State) -> f64 {
        self.inner(a, a)
    }

    /// The four Gram blocks evaluated separately:
    /// `[‖u‖²_𝕍, ‖v‖², ‖z‖²_{H¹_{Γ1}}, ‖w‖²_f]`.
    pub fn gram_blocks(&self, a: &State) -> [f64; 4] {
        [
            quad(&self.bulk.stiffness, &a.u),
            quad(&self.bulk.mass, &a.v),
            quad(&self.boundary_stiffness, &a.z),
            quad(&self.boundary.m_f, &a.w),
        ]
    }

    /// Assembled block Gram matrix, rows ordered `(u, v, z, w)`.
    pub fn gram_matrix(&self) -> SparseMatrix {
        let (nu, nz) = (self.n_u(), self.n_z());
        let n = 2 * nu + 2 * nz;
        let mut t = Triplets::new(n, n);
        let blocks = [
            (0, &self.bulk.stiffness),
            (nu, &self.bulk.mass),
            (2 * nu, &self.boundary_stiffness),
            (2 * nu + nz, &self.boundary.m_f),
        ];
        for (off, m) in blocks {
            for (i, j, v) in m.triplet_iter() {
                t.push(off + i, off + j, *v);
            }
        }
        t.to_csr()
    }
}

/// Assembles the whole system. The damping floor is checked against the region: the
/// damping must be nonnegative and reach `a0` on every collar cell.
pub fn assemble_system(
    mesh: &Mesh,
    frames: &BoundaryFrame,
    region: &RegionFields,
    params: &MaterialParams,
) -> Result<SystemMatrices> {
    params.coefficients.check()?;
    for (c, (&w, &a)) in region.omega.iter().zip(&params.a_field).enumerate() {
        if w && a < region.a0 {
            return Err(Error::Assumption(format!("damping {a} on collar cell {c} is below a0 = {}", region.a0)));
        }
    }
    assemble_system_unchecked(mesh, frames, params)
}

/// Assembly without the collar and coefficient floor checks; used for the conservative limit
/// (`a ≡ 0`) and other diagnostics.
pub fn assemble_system_unchecked(mesh: &Mesh, frames: &BoundaryFrame, params: &MaterialParams) -> Result<SystemMatrices> {
    let bulk = assemble_bulk(mesh, params.lambda, params.alpha, &params.a_field)?;
    let layout = Gamma1Layout::new(mesh);
    if layout.n_nodes() == 0 {
        return Err(Error::Geometry("Γ1 is empty".into()));
    }
    let boundary = assemble_boundary_forms(mesh, &layout, frames, &params.coefficients, params.lambda, params.alpha)?;
    let boundary_stiffness = boundary.stiffness();
    let coupling = assemble_coupling(mesh, &layout, frames, &bulk.free);
    let trace_mass = assemble_trace_mass(mesh, &bulk.free);
    Ok(SystemMatrices {
        dim: mesh.dim,
        bulk,
        boundary,
        boundary_stiffness,
        coupling,
        trace_mass,
        layout,
        lambda: params.lambda,
        alpha: params.alpha,
        h0: params.coefficients.h0,
        coefficients: params.coefficients.clone(),
        a_field: params.a_field.clone(),
    })
}

/// Shifted resolvent blocks for `(I + θA)U = k`:
/// `P_θ = M + θD_a + θ²K_Ω` and `Q_θ = M_f + θD_g + θ²(H_h + K_elastic + K_LB)`.
pub fn shifted_blocks(sys: &SystemMatrices, theta: f64) -> (SparseMatrix, SparseMatrix) {
    let p = combine(&[
        (1.0, &sys.bulk.mass),
        (theta, &sys.bulk.damping),
        (theta * theta, &sys.bulk.stiffness),
    ]);
    let q = combine(&[
        (1.0, &sys.boundary.m_f),
        (theta, &sys.boundary.d_g),
        (theta * theta, &sys.boundary_stiffness),
    ]);
    (p, q)
}

/// Variational resolvent system in the unknowns `(v, w)`.
#[derive(Debug, Clone)]
pub struct ResolventSystem {
    /// Block operator `[[P_θ, -θBᵀ], [θB, Q_θ]]`, of size `n_u + n_z`. Its
    /// symmetric part is `blkdiag(P_θ, Q_θ)`; the trace coupling is skew.
    pub phi: SparseMatrix,
    /// Load `(M k₂ - θK k₁, M_f k₄ - θK_z k₃)`.
    pub psi: Vec<f64>,
    pub theta: f64,
}

/// Builds the `θ`-scaled form of the variational resolvent problem. With
/// `θ = 1` this is `(I + A)U = k`.
pub fn assemble_resolvent_system(k: &State, sys: &SystemMatrices, theta: f64) -> ResolventSystem {
    let (nu, nz) = (sys.n_u(), sys.n_z());
    let (p, q) = shifted_blocks(sys, theta);
    let mut t = Triplets::new(nu + nz, nu + nz);
    for (i, j, v) in p.triplet_iter() {
        t.push(i, j, *v);
    }
    for (i, j, v) in q.triplet_iter() {
        t.push(nu + i, nu + j, *v);
    }
    for (i, j, v) in sys.coupling.triplet_iter() {
        t.push(nu + i, j, theta * v);
        t.push(j, nu + i, -theta * v);
    }
    ResolventSystem {
        phi: t.to_csr(),
        psi: resolvent_load(k, sys, theta),
        theta,
    }
}

pub fn resolvent_load(k: &State, sys: &SystemMatrices, theta: f64) -> Vec<f64> {
    let mk2 = matvec(&sys.bulk.mass, &k.v);
    let kk1 = matvec(&sys.bulk.stiffness, &k.u);
    let mk4 = matvec(&sys.boundary.m_f, &k.w);
    let kk3 = matvec(&sys.boundary_stiffness, &k.z);
    let mut psi: Vec<f64> = mk2.iter().zip(&kk1).map(|(a, b)| a - theta * b).collect();
    psi.extend(mk4.iter().zip(&kk3).map(|(a, b)| a - theta * b));
    psi
}

/// Recovers the full state from the resolvent unknowns: `u = k₁ + θv`,
/// `z = k₃ + θw`.
pub fn reconstruct_resolvent(k: &State, v: Vec<f64>, w: Vec<f64>, theta: f64) -> State {
    let u = k.u.iter().zip(&v).map(|(a, b)| a + theta * b).collect();
    let z = k.z.iter().zip(&w).map(|(a, b)| a + theta * b).collect();
    State { u, v, z, w }
}

/// Quadratic form `Φ(V, V)` for `V = (v, w)`; the coupling cancels.
pub fn phi_quadratic(sys: &SystemMatrices, v: &[f64], w: &[f64], theta: f64) -> f64 {
    let (p, q) = shifted_blocks(sys, theta);
    let bv = matvec(&sys.coupling, v);
    let btw = matvec_t(&sys.coupling, w);
    quad(&p, v) + quad(&q, w) + theta * (crate::linalg::dot(w, &bv) - crate::linalg::dot(v, &btw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, classify_boundary, compute_boundary_frames, MeshKind};
    use crate::linalg::max_asymmetry;
    use std::f64::consts::PI;

    fn annulus(h: f64) -> (Mesh, BoundaryFrame) {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, h).unwrap();
        let m = classify_boundary(&m, &Point::zeros(), 1.0).unwrap();
        let fr = compute_boundary_frames(&m).unwrap();
        (m, fr)
    }

    fn nodal(m: &Mesh, f: impl Fn(&Point) -> Point) -> Vec<f64> {
        let d = m.dim;
        let mut u = vec![0.0; d * m.vertices.len()];
        for (v, p) in m.vertices.iter().enumerate() {
            let val = f(p);
            for i in 0..d {
                u[d * v + i] = val[i];
            }
        }
        u
    }

    #[test]
    fn rigid_motions_are_annihilated() {
        let (m, _) = annulus(0.25);
        let b = assemble_bulk(&m, 1.3, 0.7, &vec![0.0; m.cells.len()]).unwrap();
        for u in [
            nodal(&m, |_| Point::new(1.0, 0.0, 0.0)),
            nodal(&m, |_| Point::new(0.0, 1.0, 0.0)),
            nodal(&m, |p| Point::new(-p.y, p.x, 0.0)),
        ] {
            let ku = matvec(&b.stiffness_full, &u);
            assert!(crate::linalg::norm(&ku) < 1e-12);
        }
        let m3 = build_mesh(MeshKind::Shell, 1.0, 2.0, 0.45).unwrap();
        let b3 = assemble_bulk(&m3, 1.0, 1.0, &vec![0.0; m3.cells.len()]).unwrap();
        let u = nodal(&m3, |p| Point::new(p.z, 0.0, -p.x));
        assert!(crate::linalg::norm(&matvec(&b3.stiffness_full, &u)) < 1e-11);
    }

    #[test]
    fn linear_field_energy_is_exact() {
        let (m, _) = annulus(0.25);
        let (alpha, lambda) = (0.7, 1.3);
        let b = assemble_bulk(&m, lambda, alpha, &vec![0.0; m.cells.len()]).unwrap();
        let u = nodal(&m, |p| *p);
        let e = quad(&b.stiffness_full, &u);
        // the polygonal domain area replaces 3π
        let expect = (4.0 * alpha + 4.0 * lambda) * m.total_measure();
        assert!((e - expect).abs() < 1e-10 * expect);
        assert!(((4.0 * alpha + 4.0 * lambda) * 3.0 * PI - e).abs() / e < 0.02);
    }

    #[test]
    fn matrices_are_symmetric_and_damping_is_local() {
        let (m, _) = annulus(0.25);
        let a: Vec<f64> = (0..m.cells.len()).map(|c| if m.cell_centroid(c).norm() > 1.7 { 1.0 } else { 0.0 }).collect();
        let b = assemble_bulk(&m, 1.0, 1.0, &a).unwrap();
        for x in [&b.mass, &b.stiffness, &b.damping, &b.stiffness_full] {
            assert_eq!(max_asymmetry(x), 0.0);
        }
        // rows of vertices far from the collar vanish exactly
        for (k, &v) in b.free.free_vertices.iter().enumerate() {
            if m.vertices[v].norm() < 1.4 {
                let row = b.damping.row(2 * k);
                assert!(row.values().iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn coupling_total_is_boundary_length() {
        let (m, fr) = annulus(0.1);
        let b = assemble_bulk(&m, 1.0, 1.0, &vec![0.0; m.cells.len()]).unwrap();
        let layout = Gamma1Layout::new(&m);
        let bm = assemble_coupling(&m, &layout, &fr, &b.free);
        // constant bulk trace e_x paired with the boundary field whose
        // ambient value is e_x at every node
        let u = b.free.restrict(&vec![Point::x(); m.vertices.len()]);
        let tr: Vec<Point> = vec![Point::x(); layout.n_nodes()];
        let w = crate::tangential::decompose_trace(&layout, &fr, &tr).unwrap().to_vec();
        let total = crate::linalg::bilinear(&bm, &w, &u);
        let len = m.boundary_measure(Some(BoundaryLabel::Gamma1));
        assert!((total - len).abs() < 1e-12 * len);
        // a bulk field vanishing on Γ1
        let g1 = m.boundary_vertices(BoundaryLabel::Gamma1);
        let mut off = u.clone();
        for &v in &g1 {
            for i in 0..2 {
                off[b.free.dof(v, i).unwrap()] = 0.0;
            }
        }
        assert!(matvec(&bm, &off).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_damping_is_rejected() {
        let (m, _) = annulus(0.5);
        let mut a = vec![0.0; m.cells.len()];
        a[0] = -1.0;
        assert!(matches!(assemble_bulk(&m, 1.0, 1.0, &a), Err(Error::Assumption(_))));
    }
}
