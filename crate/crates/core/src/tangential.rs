//! Surface calculus on Γ1: trace decomposition, tangential strain and
//! stress, and the boundary bilinear forms.
//!
//! Boundary unknowns live on the Γ1 vertices. Each node carries `d - 1`
//! tangential coordinates (in its local tangent basis) followed by one
//! normal coordinate, stored node-major.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{facet_gradients, BoundaryFrame, BoundaryLabel, Mesh, Point};
use crate::linalg::{quad, SparseMatrix, Triplets};

/// Index bookkeeping for the Γ1 unknowns.
#[derive(Debug, Clone)]
pub struct Gamma1Layout {
    pub dim: usize,
    /// Γ1 vertex ids, sorted.
    pub nodes: Vec<usize>,
    /// Position of each mesh vertex in `nodes`.
    pub slot: Vec<Option<usize>>,
    /// Indices into `mesh.boundary_facets` of the Γ1 facets.
    pub facets: Vec<usize>,
}

impl Gamma1Layout {
    pub fn new(mesh: &Mesh) -> Self {
        let nodes = mesh.boundary_vertices(BoundaryLabel::Gamma1);
        let mut slot = vec![None; mesh.vertices.len()];
        for (i, &v) in nodes.iter().enumerate() {
            slot[v] = Some(i);
        }
        let facets = mesh
            .boundary_facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.label == BoundaryLabel::Gamma1)
            .map(|(i, _)| i)
            .collect();
        Self {
            dim: mesh.dim,
            nodes,
            slot,
            facets,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.dim * self.nodes.len()
    }

    /// Dof of component `c` (`c < d-1` tangential, `c = d-1` normal) at
    /// node slot `i`.
    #[inline]
    pub fn dof(&self, i: usize, c: usize) -> usize {
        self.dim * i + c
    }

    #[inline]
    pub fn normal_dof(&self, i: usize) -> usize {
        self.dim * i + self.dim - 1
    }

    /// Ambient unit vector carried by component `c` at node slot `i`.
    pub fn direction(&self, frames: &BoundaryFrame, i: usize, c: usize) -> Point {
        let k = frames.slot[self.nodes[i]].expect("Γ1 node has a frame");
        if c + 1 == self.dim {
            frames.normal[k]
        } else {
            frames.tangents[k][c]
        }
    }
}

/// Boundary field split into tangential coordinates and normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub dim: usize,
    /// `d - 1` tangential coordinates per node, node-major.
    pub z_t: Vec<f64>,
    pub z_nu: Vec<f64>,
}

impl BoundaryField {
    pub fn zeros(layout: &Gamma1Layout) -> Self {
        Self {
            dim: layout.dim,
            z_t: vec![0.0; (layout.dim - 1) * layout.n_nodes()],
            z_nu: vec![0.0; layout.n_nodes()],
        }
    }

    pub fn from_vec(layout: &Gamma1Layout, z: &[f64]) -> Result<Self> {
        if z.len() != layout.n_dofs() {
            return Err(Error::State(format!(
                "boundary vector has {} entries, expected {}",
                z.len(),
                layout.n_dofs()
            )));
        }
        let d = layout.dim;
        let mut out = Self::zeros(layout);
        for i in 0..layout.n_nodes() {
            for c in 0..d - 1 {
                out.z_t[(d - 1) * i + c] = z[d * i + c];
            }
            out.z_nu[i] = z[d * i + d - 1];
        }
        Ok(out)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let d = self.dim;
        let n = self.z_nu.len();
        let mut z = vec![0.0; d * n];
        for i in 0..n {
            for c in 0..d - 1 {
                z[d * i + c] = self.z_t[(d - 1) * i + c];
            }
            z[d * i + d - 1] = self.z_nu[i];
        }
        z
    }
}

/// `λ* = 2λμ / (λ + 2μ)`.
pub fn lambda_star(lambda: f64, mu: f64) -> f64 {
    2.0 * lambda * mu / (lambda + 2.0 * mu)
}

/// Splits an ambient vector field given at the Γ1 nodes (in layout order)
/// into normal and tangential parts.
pub fn decompose_trace(layout: &Gamma1Layout, frames: &BoundaryFrame, ambient: &[Point]) -> Result<BoundaryField> {
    if ambient.len() != layout.n_nodes() {
        return Err(Error::State(format!(
            "trace has {} nodes, Γ1 has {}",
            ambient.len(),
            layout.n_nodes()
        )));
    }
    let d = layout.dim;
    let mut out = BoundaryField::zeros(layout);
    for (i, phi) in ambient.iter().enumerate() {
        let k = frames.index_of(layout.nodes[i])?;
        let nu = frames.normal[k];
        out.z_nu[i] = phi.dot(&nu);
        let tangential = frames.projector[k] * phi;
        for (c, t) in frames.tangents[k].iter().enumerate() {
            out.z_t[(d - 1) * i + c] = tangential.dot(t);
        }
    }
    Ok(out)
}

/// Inverse of [`decompose_trace`]: `z_T·(tangent basis) + z_ν ν`.
pub fn reconstruct_trace(layout: &Gamma1Layout, frames: &BoundaryFrame, z: &BoundaryField) -> Result<Vec<Point>> {
    let d = layout.dim;
    (0..layout.n_nodes())
        .map(|i| {
            let k = frames.index_of(layout.nodes[i])?;
            let mut p = frames.normal[k] * z.z_nu[i];
            for (c, t) in frames.tangents[k].iter().enumerate() {
                p += t * z.z_t[(d - 1) * i + c];
            }
            Ok(p)
        })
        .collect()
}

/// Geometry of one Γ1 facet with the strain generated by each of its
/// boundary dofs.
#[derive(Debug, Clone)]
pub struct FacetBasis {
    pub facet: usize,
    pub measure: f64,
    /// Projector onto the facet's tangent plane.
    pub projector: Matrix3<f64>,
    /// Unit facet tangent (2D only; zero in 3D).
    pub tangent: Point,
    /// Layout slots of the facet vertices.
    pub slots: Vec<usize>,
    /// Gradients of the facet hat functions, facet-local order.
    pub grads: Vec<Point>,
    /// Strain of each local dof `(a, c)` at index `d·a + c`.
    pub strains: Vec<Matrix3<f64>>,
}

fn facet_projector(n: &Point, dim: usize) -> Matrix3<f64> {
    let mut id = Matrix3::identity();
    if dim == 2 {
        id[(2, 2)] = 0.0;
    }
    id - n * n.transpose()
}

/// Basis strains on a Γ1 facet: the tangential dofs contribute
/// `sym(π (t ⊗ ∇_T N) π)`, the normal dofs `N̄ π (∂_T ν) π` with the nodal
/// shape operators averaged to the facet and `N̄ = 1/(d)` the facet mean of
/// a hat function.
pub fn facet_basis(mesh: &Mesh, layout: &Gamma1Layout, frames: &BoundaryFrame, facet: usize) -> FacetBasis {
    let dim = mesh.dim;
    let f = &mesh.boundary_facets[facet];
    let pts = mesh.facet_points(f);
    let (grads, measure) = facet_gradients(&pts, dim);
    let n = mesh.facet_normal(f);
    let p = facet_projector(&n, dim);
    let tangent = if dim == 2 { (pts[1] - pts[0]).normalize() } else { Point::zeros() };
    let slots: Vec<usize> = f.vertices.iter().map(|&v| layout.slot[v].expect("Γ1 facet vertex")).collect();
    let nv = f.vertices.len();
    let mut shape = Matrix3::zeros();
    for &v in &f.vertices {
        shape += frames.shape[frames.slot[v].expect("frame")];
    }
    let shape = p * (shape / nv as f64) * p;
    let mut strains = vec![Matrix3::zeros(); dim * nv];
    for a in 0..nv {
        for c in 0..dim {
            let e = if c + 1 == dim {
                shape / nv as f64
            } else {
                let t = layout.direction(frames, slots[a], c);
                let g = p * (t * grads[a].transpose()) * p;
                0.5 * (g + g.transpose())
            };
            strains[dim * a + c] = e;
        }
    }
    FacetBasis {
        facet,
        measure,
        projector: p,
        tangent,
        slots,
        grads,
        strains,
    }
}

/// `σ_T⁰ = 2μ ε + λ* tr(ε) π`.
pub fn stress_from_strain(strain: &Matrix3<f64>, projector: &Matrix3<f64>, lambda: f64, mu: f64) -> Matrix3<f64> {
    strain * (2.0 * mu) + projector * (lambda_star(lambda, mu) * strain.trace())
}

#[derive(Debug, Clone)]
pub struct FacetStrain {
    pub facet: usize,
    pub measure: f64,
    pub strain: Matrix3<f64>,
    pub stress: Matrix3<f64>,
    /// In 2D, the scalar `ε_T⁰ = τᵀ ε τ`; in 3D the trace.
    pub scalar_strain: f64,
}

/// Piecewise-constant tangential strain and stress of `z` on every Γ1 facet.
pub fn tangential_strain_stress(
    mesh: &Mesh,
    layout: &Gamma1Layout,
    frames: &BoundaryFrame,
    z: &BoundaryField,
    lambda: f64,
    mu: f64,
) -> Vec<FacetStrain> {
    let zv = z.to_vec();
    layout
        .facets
        .iter()
        .map(|&fi| {
            let fb = facet_basis(mesh, layout, frames, fi);
            let mut e = Matrix3::zeros();
            for (a, &s) in fb.slots.iter().enumerate() {
                for c in 0..layout.dim {
                    e += fb.strains[layout.dim * a + c] * zv[layout.dof(s, c)];
                }
            }
            let scalar = if layout.dim == 2 {
                fb.tangent.dot(&(e * fb.tangent))
            } else {
                e.trace()
            };
            FacetStrain {
                facet: fi,
                measure: fb.measure,
                strain: e,
                stress: stress_from_strain(&e, &fb.projector, lambda, mu),
                scalar_strain: scalar,
            }
        })
        .collect()
}

/// Nodal coefficient fields on Γ1 (layout order) with their lower bounds.
#[derive(Debug, Clone)]
pub struct BoundaryCoefficients {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub f0: f64,
    pub g0: f64,
    pub h0: f64,
}

impl BoundaryCoefficients {
    /// Constant coefficients; the floors equal the constants.
    pub fn constant(layout: &Gamma1Layout, f: f64, g: f64, h: f64) -> Self {
        let n = layout.n_nodes();
        Self {
            f: vec![f; n],
            g: vec![g; n],
            h: vec![h; n],
            f0: f,
            g0: g,
            h0: h,
        }
    }

    /// Checks that every coefficient respects its positive floor.
    pub fn check(&self) -> Result<()> {
        for (name, vals, floor) in [("f", &self.f, self.f0), ("g", &self.g, self.g0), ("h", &self.h, self.h0)] {
            if !(floor > 0.0) {
                return Err(Error::Assumption(format!("{name} floor must be positive, got {floor}")));
            }
            if let Some(v) = vals.iter().find(|&&v| !(v >= floor)) {
                return Err(Error::Assumption(format!("{name} = {v} drops below its floor {floor}")));
            }
        }
        Ok(())
    }
}

/// Galerkin matrices of the Γ1 forms, all of size `n_dofs × n_dofs`.
#[derive(Debug, Clone)]
pub struct BoundaryOperators {
    pub m_f: SparseMatrix,
    pub d_g: SparseMatrix,
    pub h_h: SparseMatrix,
    pub k_elastic: SparseMatrix,
    /// Laplace–Beltrami stiffness acting on the normal components only.
    pub k_lb: SparseMatrix,
    /// Unweighted boundary mass, component-wise.
    pub mass: SparseMatrix,
}

impl BoundaryOperators {
    /// Boundary part of the energy inner product, `H_h + K_elastic + K_LB`.
    pub fn stiffness(&self) -> SparseMatrix {
        crate::linalg::combine(&[(1.0, &self.h_h), (1.0, &self.k_elastic), (1.0, &self.k_lb)])
    }

    /// `zᵀ H_h z + zᵀ K_elastic z + zᵀ K_LB z` evaluated form by form.
    pub fn energy_terms(&self, z: &[f64]) -> [f64; 3] {
        [quad(&self.h_h, z), quad(&self.k_elastic, z), quad(&self.k_lb, z)]
    }
}

/// Entry `(a, b)` of the P1 mass matrix on a `k`-simplex of measure `m`.
#[inline]
pub fn p1_mass(m: f64, k: usize, a: usize, b: usize) -> f64 {
    let diag = if a == b { 2.0 } else { 1.0 };
    m * diag / ((k + 1) * (k + 2)) as f64
}

pub fn assemble_boundary_operators(
    mesh: &Mesh,
    layout: &Gamma1Layout,
    frames: &BoundaryFrame,
    coeffs: &BoundaryCoefficients,
    lambda: f64,
    mu: f64,
) -> Result<BoundaryOperators> {
    coeffs.check()?;
    assemble_boundary_forms(mesh, layout, frames, coeffs, lambda, mu)
}

/// Same forms without the coefficient floor check, so that limits such as
/// `g ≡ 0` can be assembled.
pub fn assemble_boundary_forms(
    mesh: &Mesh,
    layout: &Gamma1Layout,
    frames: &BoundaryFrame,
    coeffs: &BoundaryCoefficients,
    lambda: f64,
    mu: f64,
) -> Result<BoundaryOperators> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::Parameter(format!("Lamé constants must be positive, got λ={lambda}, μ={mu}")));
    }
    let n = layout.n_dofs();
    if coeffs.f.len() != layout.n_nodes() || coeffs.g.len() != layout.n_nodes() || coeffs.h.len() != layout.n_nodes() {
        return Err(Error::Parameter("coefficient fields must match the Γ1 node count".into()));
    }
    let d = layout.dim;
    let ls = lambda_star(lambda, mu);
    let k = d - 1;
    let chunks: Vec<[Triplets; 6]> = layout
        .facets
        .par_chunks(64)
        .map(|chunk| {
            let mut t: [Triplets; 6] = std::array::from_fn(|_| Triplets::new(n, n));
            for &fi in chunk {
                let fb = facet_basis(mesh, layout, frames, fi);
                let nv = fb.slots.len();
                let avg = |c: &[f64]| fb.slots.iter().map(|&s| c[s]).sum::<f64>() / nv as f64;
                let (fe, ge, he) = (avg(&coeffs.f), avg(&coeffs.g), avg(&coeffs.h));
                for a in 0..nv {
                    for b in 0..nv {
                        let m = p1_mass(fb.measure, k, a, b);
                        for c in 0..d {
                            let (ra, cb) = (layout.dof(fb.slots[a], c), layout.dof(fb.slots[b], c));
                            t[0].push(ra, cb, fe * m);
                            t[1].push(ra, cb, ge * m);
                            t[2].push(ra, cb, he * m);
                            t[5].push(ra, cb, m);
                        }
                        let lb = fb.measure * fb.grads[a].dot(&fb.grads[b]);
                        t[4].push(layout.normal_dof(fb.slots[a]), layout.normal_dof(fb.slots[b]), lb);
                        for ca in 0..d {
                            for cb in 0..d {
                                let ea = &fb.strains[d * a + ca];
                                let eb = &fb.strains[d * b + cb];
                                let v = fb.measure * (2.0 * mu * ea.dot(eb) + ls * (ea.trace() * eb.trace()));
                                t[3].push(layout.dof(fb.slots[a], ca), layout.dof(fb.slots[b], cb), v);
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    let mut all: [Triplets; 6] = std::array::from_fn(|_| Triplets::new(n, n));
    for chunk in chunks {
        for (acc, part) in all.iter_mut().zip(chunk) {
            acc.extend(part);
        }
    }
    Ok(BoundaryOperators {
        m_f: all[0].to_csr(),
        d_g: all[1].to_csr(),
        h_h: all[2].to_csr(),
        k_elastic: all[3].to_csr(),
        k_lb: all[4].to_csr(),
        mass: all[5].to_csr(),
    })
}

/// Integration-by-parts defect on Γ1 for tangential fields:
/// `|∫ div_T(v_T) u_T + ∫ (∇_T u_T) v_T|`, where both fields are
/// interpolated as ambient piecewise-linear vectors. On a closed curve or
/// surface the continuous value is zero.
pub fn stokes_residual(
    mesh: &Mesh,
    layout: &Gamma1Layout,
    frames: &BoundaryFrame,
    v_t: &BoundaryField,
    u_t: &BoundaryField,
) -> f64 {
    let d = layout.dim;
    let tangential = |z: &BoundaryField, i: usize| -> Point {
        let k = frames.slot[layout.nodes[i]].expect("frame");
        frames.tangents[k]
            .iter()
            .enumerate()
            .fold(Point::zeros(), |acc, (c, t)| acc + t * z.z_t[(d - 1) * i + c])
    };
    let mut total = Point::zeros();
    for &fi in &layout.facets {
        let fb = facet_basis(mesh, layout, frames, fi);
        let vs: Vec<Point> = fb.slots.iter().map(|&s| tangential(v_t, s)).collect();
        let us: Vec<Point> = fb.slots.iter().map(|&s| tangential(u_t, s)).collect();
        let nv = vs.len();
        // constant surface gradients on the facet
        let grad_v = vs.iter().zip(&fb.grads).fold(Matrix3::zeros(), |acc, (v, g)| acc + v * g.transpose());
        let grad_u = us.iter().zip(&fb.grads).fold(Matrix3::zeros(), |acc, (u, g)| acc + u * g.transpose());
        let div_v = (fb.projector * grad_v).trace();
        let mean_u = us.iter().fold(Point::zeros(), |acc, u| acc + u) / nv as f64;
        let mean_v = vs.iter().fold(Point::zeros(), |acc, v| acc + v) / nv as f64;
        // both integrands are linear on the facet, so the centroid rule is exact
        total += (mean_u * div_v + grad_u * mean_v) * fb.measure;
    }
    total.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, classify_boundary, compute_boundary_frames, MeshKind};
    use crate::linalg::max_asymmetry;
    use std::f64::consts::PI;

    fn setup(h: f64) -> (Mesh, BoundaryFrame, Gamma1Layout) {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, h).unwrap();
        let m = classify_boundary(&m, &Point::zeros(), 1.0).unwrap();
        let fr = compute_boundary_frames(&m).unwrap();
        let l = Gamma1Layout::new(&m);
        (m, fr, l)
    }

    #[test]
    fn decomposition_examples() {
        let (m, fr, l) = setup(0.25);
        let normals: Vec<Point> = l.nodes.iter().map(|&v| fr.normal_at(v).unwrap()).collect();
        let z = decompose_trace(&l, &fr, &normals).unwrap();
        assert!(z.z_t.iter().all(|x| x.abs() < 1e-15));
        assert!(z.z_nu.iter().all(|x| (x - 1.0).abs() < 1e-15));
        let tangents: Vec<Point> = l.nodes.iter().map(|&v| fr.tangent(v).unwrap()).collect();
        let z = decompose_trace(&l, &fr, &tangents).unwrap();
        assert!(z.z_t.iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert!(z.z_nu.iter().all(|x| x.abs() < 1e-15));
        let zero = vec![Point::zeros(); l.n_nodes()];
        assert_eq!(decompose_trace(&l, &fr, &zero).unwrap(), BoundaryField::zeros(&l));
        let _ = m;
    }

    #[test]
    fn lambda_star_arithmetic() {
        assert_eq!(lambda_star(1.0, 1.0), 2.0 / 3.0);
    }

    #[test]
    fn inflation_strain_on_inner_circle() {
        let (m, fr, l) = setup(0.05);
        let mut z = BoundaryField::zeros(&l);
        z.z_nu.iter_mut().for_each(|x| *x = 1.0);
        for s in tangential_strain_stress(&m, &l, &fr, &z, 1.0, 1.0) {
            assert!((s.scalar_strain + 1.0).abs() < 1e-2, "{}", s.scalar_strain);
            let sigma_scalar = s.stress[(0, 0)] + s.stress[(1, 1)];
            assert!((sigma_scalar - (2.0 + 2.0 / 3.0) * s.scalar_strain).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_rotation_has_no_strain() {
        let (m, fr, l) = setup(0.1);
        let mut z = BoundaryField::zeros(&l);
        z.z_t.iter_mut().for_each(|x| *x = 1.0);
        for s in tangential_strain_stress(&m, &l, &fr, &z, 1.0, 1.0) {
            assert!(s.scalar_strain.abs() < 1e-12);
        }
    }

    #[test]
    fn operator_examples() {
        let (m, fr, l) = setup(0.05);
        let c = BoundaryCoefficients::constant(&l, 1.0, 1.0, 1.0);
        let ops = assemble_boundary_operators(&m, &l, &fr, &c, 1.0, 1.0).unwrap();
        let mut one = vec![0.0; l.n_dofs()];
        for i in 0..l.n_nodes() {
            one[l.normal_dof(i)] = 1.0;
        }
        assert!((quad(&ops.m_f, &one) - 2.0 * PI).abs() / (2.0 * PI) < 0.01);
        let kel = quad(&ops.k_elastic, &one);
        let expect = (2.0 + 2.0 / 3.0) * 2.0 * PI;
        assert!((kel - expect).abs() / expect < 0.01, "{kel} vs {expect}");
        let mut s = vec![0.0; l.n_dofs()];
        for (i, &v) in l.nodes.iter().enumerate() {
            let p = m.vertices[v];
            s[l.normal_dof(i)] = p.y.atan2(p.x).sin();
        }
        let lb = quad(&ops.k_lb, &s);
        assert!((lb - PI).abs() / PI < 0.01, "{lb}");
        for a in [&ops.m_f, &ops.d_g, &ops.h_h, &ops.k_elastic, &ops.k_lb] {
            assert_eq!(max_asymmetry(a), 0.0);
        }
    }

    #[test]
    fn floor_violation_is_rejected() {
        let (m, fr, l) = setup(0.25);
        let mut c = BoundaryCoefficients::constant(&l, 1.0, 1.0, 1.0);
        c.g[0] = 0.5;
        assert!(matches!(
            assemble_boundary_operators(&m, &l, &fr, &c, 1.0, 1.0),
            Err(Error::Assumption(_))
        ));
        let c = BoundaryCoefficients::constant(&l, 1.0, 0.0, 1.0);
        assert!(matches!(c.check(), Err(Error::Assumption(_))));
    }

    #[test]
    fn stokes_residual_vanishes_for_zero_and_constants() {
        let (m, fr, l) = setup(0.1);
        let z = BoundaryField::zeros(&l);
        assert_eq!(stokes_residual(&m, &l, &fr, &z, &z), 0.0);
        let mut c = BoundaryField::zeros(&l);
        c.z_t.iter_mut().for_each(|x| *x = 1.0);
        assert!(stokes_residual(&m, &l, &fr, &c, &c) < 1e-10);
    }

    #[test]
    fn shell_operators_are_symmetric_semidefinite() {
        let m = build_mesh(MeshKind::Shell, 1.0, 2.0, 0.45).unwrap();
        let m = classify_boundary(&m, &Point::zeros(), 1.0).unwrap();
        let fr = compute_boundary_frames(&m).unwrap();
        let l = Gamma1Layout::new(&m);
        let c = BoundaryCoefficients::constant(&l, 1.0, 1.0, 1.0);
        let ops = assemble_boundary_operators(&m, &l, &fr, &c, 1.0, 1.0).unwrap();
        assert_eq!(max_asymmetry(&ops.k_elastic), 0.0);
        let ev = crate::linalg::to_dense(&ops.k_elastic).symmetric_eigenvalues();
        assert!(ev.min() > -1e-10);
    }
}
