//! Discrete audits of the multiplier identities.
//!
//! Every identity is written as a signed sum of terms that vanishes for exact
//! solutions. Bracket terms `[F(U)]₀ᵀ` are evaluated at the first and last
//! states; time integrals use the midpoint rule on `U_m = (Uⁿ + Uⁿ⁺¹)/2`,
//! which makes the time discretization exact for the quadratic integrands
//! (the implicit midpoint scheme satisfies `uⁿ⁺¹ - uⁿ = dt v_m`), so the
//! residual isolates the spatial consistency error. Space integrals of P1
//! products are exact.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::assembly::SystemMatrices;
use crate::error::{Error, Result};
use crate::evolution::{State, Trajectory};
use crate::geometry::{simplex_gradients, BoundaryFrame, BoundaryLabel, Mesh, Point, RegionFields};
use crate::tangential::{lambda_star, p1_mass, reconstruct_trace, tangential_strain_stress, BoundaryField};

#[derive(Debug, Clone, Serialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

/// Term values of one identity on one run. `residual` is the signed sum of
/// the terms.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub h: f64,
    pub terms: Vec<Term>,
    pub residual: f64,
    /// `Σ |term|`, the natural size against which the residual is judged.
    pub scale: f64,
}

impl IdentityReport {
    fn new(identity: &str, h: f64, terms: Vec<Term>) -> Self {
        let residual = terms.iter().map(|t| t.value).sum();
        let scale = terms.iter().map(|t| t.value.abs()).sum();
        Self {
            identity: identity.to_string(),
            h,
            terms,
            residual,
            scale,
        }
    }

    pub fn relative_residual(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual.abs() / self.scale
        } else {
            0.0
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Relative residual below which an identity is considered closed to
/// round-off; such identities cannot contract further.
pub const ROUND_OFF_FLOOR: f64 = 1e-11;

/// Empirical order `log(r_coarse / r_fine) / log(h_coarse / h_fine)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceOrder {
    pub identity: String,
    pub h: [f64; 2],
    pub residual: [f64; 2],
    pub order: f64,
    /// Both residuals sit at round-off relative to their term scales.
    pub at_round_off: bool,
}

impl ConvergenceOrder {
    /// Order at least `min`, or both levels exact to round-off.
    pub fn passes(&self, min: f64) -> bool {
        self.at_round_off || self.order >= min
    }
}

pub fn convergence_order(coarse: &IdentityReport, fine: &IdentityReport) -> ConvergenceOrder {
    let (rc, rf) = (coarse.residual.abs(), fine.residual.abs());
    ConvergenceOrder {
        identity: coarse.identity.clone(),
        h: [coarse.h, fine.h],
        residual: [coarse.residual, fine.residual],
        order: (rc / rf).ln() / (coarse.h / fine.h).ln(),
        at_round_off: coarse.relative_residual() <= ROUND_OFF_FLOOR && fine.relative_residual() <= ROUND_OFF_FLOOR,
    }
}

/// `∫ λ_a λ_b λ_c` over a `k`-simplex of measure `m`.
#[inline]
pub fn p1_triple(m: f64, k: usize, a: usize, b: usize, c: usize) -> f64 {
    let mult = if a == b && b == c {
        6.0
    } else if a == b || b == c || a == c {
        2.0
    } else {
        1.0
    };
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    m * fact(k) * mult / fact(k + 3)
}

/// Multipliers the audit knows how to apply.
#[derive(Debug, Clone)]
pub enum Multiplier {
    /// `2 (∇u) q` for a nodal vector field `q`.
    Flux { label: String, q: Vec<Point> },
    /// `2 ψ u` for a nodal scalar `ψ`.
    Scalar { label: String, psi: Vec<f64> },
    /// `-2 ε_T⁰ q_T` on the tangential boundary equation (2D).
    Tangential { label: String, q_t: Vec<f64> },
    /// `-2 (∂_s z_ν - κ z_T) q_T` on the normal boundary equation (2D).
    Normal { label: String, q_t: Vec<f64> },
}

const FLUX_TERMS: [&str; 8] = [
    "time_boundary",
    "div_q",
    "grad_q",
    "damping",
    "gamma0_flux",
    "gamma0_traction",
    "gamma1_flux",
    "gamma1_coupling",
];
const SCALAR_TERMS: [&str; 6] = ["time_boundary", "kinetic", "gamma1_coupling", "strain", "gradient", "damping"];
const TANGENTIAL_TERMS: [&str; 7] = [
    "time_boundary",
    "inertia_div",
    "inertia_curvature",
    "stress",
    "damping",
    "reaction",
    "trace",
];
const NORMAL_TERMS: [&str; 10] = [
    "time_boundary",
    "inertia_div",
    "inertia_curvature",
    "stress_curvature",
    "gradient_div",
    "gradient_curvature",
    "damping",
    "reaction",
    "trace",
    "christoffel",
];

impl Multiplier {
    pub fn label(&self) -> &str {
        match self {
            Multiplier::Flux { label, .. }
            | Multiplier::Scalar { label, .. }
            | Multiplier::Tangential { label, .. }
            | Multiplier::Normal { label, .. } => label,
        }
    }

    pub fn term_names(&self) -> &'static [&'static str] {
        match self {
            Multiplier::Flux { .. } => &FLUX_TERMS,
            Multiplier::Scalar { .. } => &SCALAR_TERMS,
            Multiplier::Tangential { .. } => &TANGENTIAL_TERMS,
            Multiplier::Normal { .. } => &NORMAL_TERMS,
        }
    }
}

/// Precomputed geometry for repeated evaluation of the identities.
pub struct AuditContext<'a> {
    pub mesh: &'a Mesh,
    pub sys: &'a SystemMatrices,
    pub frames: &'a BoundaryFrame,
    pub region: &'a RegionFields,
    cell_grads: Vec<Vec<Point>>,
    cell_vol: Vec<f64>,
}

/// Nodal fields of one state.
struct Fields {
    u: Vec<Point>,
    v: Vec<Point>,
    /// Ambient Γ1 velocity, layout order.
    w_amb: Vec<Point>,
    z: BoundaryField,
    w: BoundaryField,
}

impl<'a> AuditContext<'a> {
    pub fn new(mesh: &'a Mesh, sys: &'a SystemMatrices, frames: &'a BoundaryFrame, region: &'a RegionFields) -> Result<Self> {
        let mut cell_grads = Vec::with_capacity(mesh.cells.len());
        let mut cell_vol = Vec::with_capacity(mesh.cells.len());
        for c in 0..mesh.cells.len() {
            let (g, vol) = simplex_gradients(&mesh.cell_points(c), mesh.dim);
            cell_grads.push(g);
            cell_vol.push(vol);
        }
        Ok(Self {
            mesh,
            sys,
            frames,
            region,
            cell_grads,
            cell_vol,
        })
    }

    /// `q = x - x0`.
    pub fn radial_flux(&self) -> Multiplier {
        Multiplier::Flux {
            label: "flux(q = x - x0)".into(),
            q: self.mesh.vertices.iter().map(|p| p - self.region.x0).collect(),
        }
    }

    /// `q = k`, the extension of the unit normal.
    pub fn normal_flux(&self) -> Multiplier {
        Multiplier::Flux {
            label: "flux(q = k)".into(),
            q: self.region.k_field.clone(),
        }
    }

    pub fn constant_scalar(&self, c: f64) -> Multiplier {
        Multiplier::Scalar {
            label: format!("scalar(psi = {c})"),
            psi: vec![c; self.mesh.vertices.len()],
        }
    }

    pub fn cutoff_scalar(&self) -> Multiplier {
        Multiplier::Scalar {
            label: "scalar(psi = xi_eps)".into(),
            psi: self.region.xi_eps.clone(),
        }
    }

    /// Nodal `(x - x0)·τ` on Γ1 in layout order.
    fn tangential_q(&self) -> Vec<f64> {
        let layout = &self.sys.layout;
        layout
            .nodes
            .iter()
            .map(|&v| {
                let k = self.frames.slot[v].expect("Γ1 node has a frame");
                (self.mesh.vertices[v] - self.region.x0).dot(&self.frames.tangents[k][0])
            })
            .collect()
    }

    pub fn boundary_multipliers(&self) -> Result<[Multiplier; 2]> {
        if self.mesh.dim != 2 {
            return Err(Error::Parameter("boundary multiplier identities are audited in d = 2 only".into()));
        }
        let q_t = self.tangential_q();
        Ok([
            Multiplier::Tangential {
                label: "tangential(q_T = (x - x0)_T)".into(),
                q_t: q_t.clone(),
            },
            Multiplier::Normal {
                label: "normal(q_T = (x - x0)_T)".into(),
                q_t,
            },
        ])
    }

    fn fields(&self, s: &State) -> Result<Fields> {
        let sys = self.sys;
        let layout = &sys.layout;
        let w = BoundaryField::from_vec(layout, &s.w)?;
        Ok(Fields {
            u: sys.free().expand(&s.u),
            v: sys.free().expand(&s.v),
            w_amb: reconstruct_trace(layout, self.frames, &w)?,
            z: BoundaryField::from_vec(layout, &s.z)?,
            w,
        })
    }

    fn identity_d(&self) -> Matrix3<f64> {
        let mut id = Matrix3::identity();
        if self.mesh.dim == 2 {
            id[(2, 2)] = 0.0;
        }
        id
    }

    fn gradient(&self, c: usize, nodal: &[Point]) -> Matrix3<f64> {
        let cell = &self.mesh.cells[c];
        cell.iter()
            .zip(&self.cell_grads[c])
            .fold(Matrix3::zeros(), |acc, (&v, g)| acc + nodal[v] * g.transpose())
    }

    fn stress(&self, grad: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
        let eps = 0.5 * (grad + grad.transpose());
        let sigma = eps * (2.0 * self.sys.alpha) + self.identity_d() * (self.sys.lambda * eps.trace());
        (eps, sigma)
    }

    /// Bracket functionals and integrand densities of `m` at one state, in
    /// the order of [`Multiplier::term_names`]. Density slots of bracket
    /// terms and bracket slots of density terms are zero.
    fn evaluate(&self, m: &Multiplier, s: &State) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.fields(s)?;
        Ok(match m {
            Multiplier::Flux { q, .. } => self.flux_terms(&f, q),
            Multiplier::Scalar { psi, .. } => self.scalar_terms(&f, psi),
            Multiplier::Tangential { q_t, .. } => self.boundary_terms(&f, q_t, true),
            Multiplier::Normal { q_t, .. } => self.boundary_terms(&f, q_t, false),
        })
    }

    /// Volume-weighted average of the adjacent cell gradients at every
    /// vertex.
    fn recovered_gradient(&self, nodal: &[Point]) -> Vec<Matrix3<f64>> {
        let mesh = self.mesh;
        let mut acc = vec![Matrix3::zeros(); mesh.vertices.len()];
        let mut wgt = vec![0.0; mesh.vertices.len()];
        for (c, cell) in mesh.cells.iter().enumerate() {
            let g = self.gradient(c, nodal) * self.cell_vol[c];
            for &v in cell {
                acc[v] += g;
                wgt[v] += self.cell_vol[c];
            }
        }
        acc.iter().zip(&wgt).map(|(g, &w)| if w > 0.0 { g / w } else { *g }).collect()
    }

    /// Flux identity evaluated on the recovered gradient `G`, a continuous
    /// P1 field. With the raw cell gradients the interior jumps of `σ:ε`
    /// leave an O(1) defect; with `G` every integrand is a product of at
    /// most three P1 fields and is integrated exactly.
    fn flux_terms(&self, f: &Fields, q: &[Point]) -> (Vec<f64>, Vec<f64>) {
        let mesh = self.mesh;
        let d = mesh.dim;
        let mut br = vec![0.0; FLUX_TERMS.len()];
        let mut de = vec![0.0; FLUX_TERMS.len()];
        let grads = self.recovered_gradient(&f.u);
        let stresses: Vec<(Matrix3<f64>, Matrix3<f64>)> = grads.iter().map(|g| self.stress(g)).collect();
        // ∫ x_a · (G_b y_c) over a k-simplex
        let triple = |meas: f64, k: usize, vs: &[usize], x: &dyn Fn(usize) -> Point, y: &[Point]| {
            let mut acc = 0.0;
            for (a, &va) in vs.iter().enumerate() {
                let xa = x(va);
                for (b, &vb) in vs.iter().enumerate() {
                    for (c, &vc) in vs.iter().enumerate() {
                        acc += p1_triple(meas, k, a, b, c) * xa.dot(&(grads[vb] * y[vc]));
                    }
                }
            }
            acc
        };
        for (c, cell) in mesh.cells.iter().enumerate() {
            let vol = self.cell_vol[c];
            let gq = self.gradient(c, q);
            let vgq = triple(vol, d, cell, &|v| f.v[v], q);
            let (mut se, mut vv, mut sgq) = (0.0, 0.0, 0.0);
            for (a, &va) in cell.iter().enumerate() {
                for (b, &vb) in cell.iter().enumerate() {
                    let mab = p1_mass(vol, d, a, b);
                    se += mab * stresses[va].1.component_mul(&stresses[vb].0).sum();
                    vv += mab * f.v[va].dot(&f.v[vb]);
                    sgq += mab * stresses[va].1.component_mul(&(grads[vb] * gq)).sum();
                }
            }
            br[0] += -2.0 * vgq;
            de[1] += gq.trace() * (se - vv);
            de[2] += -2.0 * sgq;
            de[3] += -2.0 * self.sys.a_field[c] * vgq;
        }
        for facet in &mesh.boundary_facets {
            let n = mesh.facet_normal(facet);
            let meas = mesh.facet_measure(facet);
            let k = d - 1;
            let vs = &facet.vertices;
            let mut flux = 0.0;
            for (a, &va) in vs.iter().enumerate() {
                let qn = q[va].dot(&n);
                for (b, &vb) in vs.iter().enumerate() {
                    for (cc, &vc) in vs.iter().enumerate() {
                        let dens = f.v[vb].dot(&f.v[vc]) - stresses[vb].1.component_mul(&stresses[vc].0).sum();
                        flux += p1_triple(meas, k, a, b, cc) * qn * dens;
                    }
                }
            }
            match facet.label {
                BoundaryLabel::Gamma0 => {
                    de[4] += flux;
                    de[5] += 2.0 * triple(meas, k, vs, &|v| stresses[v].1 * n, q);
                }
                BoundaryLabel::Gamma1 => {
                    let layout = &self.sys.layout;
                    let w = |v: usize| f.w_amb[layout.slot[v].expect("Γ1 vertex")];
                    de[6] += flux;
                    de[7] += 2.0 * triple(meas, k, vs, &w, q);
                }
            }
        }
        (br, de)
    }

    fn scalar_terms(&self, f: &Fields, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mesh = self.mesh;
        let d = mesh.dim;
        let mut br = vec![0.0; SCALAR_TERMS.len()];
        let mut de = vec![0.0; SCALAR_TERMS.len()];
        for (c, cell) in mesh.cells.iter().enumerate() {
            let vol = self.cell_vol[c];
            let g = self.gradient(c, &f.u);
            let (eps, sigma) = self.stress(&g);
            let se = sigma.component_mul(&eps).sum();
            let (mut pvu, mut pvv) = (0.0, 0.0);
            for (a, &va) in cell.iter().enumerate() {
                for (b, &vb) in cell.iter().enumerate() {
                    for (cc, &vc) in cell.iter().enumerate() {
                        let i3 = p1_triple(vol, d, a, b, cc) * psi[va];
                        pvu += i3 * f.v[vb].dot(&f.u[vc]);
                        pvv += i3 * f.v[vb].dot(&f.v[vc]);
                    }
                }
            }
            let n = cell.len() as f64;
            let psi_mean = cell.iter().map(|&v| psi[v]).sum::<f64>() / n;
            let u_mean = cell.iter().fold(Point::zeros(), |acc, &v| acc + f.u[v]) / n;
            let grad_psi = cell
                .iter()
                .zip(&self.cell_grads[c])
                .fold(Point::zeros(), |acc, (&v, gr)| acc + gr * psi[v]);
            br[0] += 2.0 * pvu;
            de[1] += -2.0 * pvv;
            de[3] += 2.0 * se * vol * psi_mean;
            de[4] += 2.0 * vol * u_mean.dot(&(sigma * grad_psi));
            de[5] += 2.0 * self.sys.a_field[c] * pvu;
        }
        let layout = &self.sys.layout;
        for &fi in &layout.facets {
            let facet = &mesh.boundary_facets[fi];
            let meas = mesh.facet_measure(facet);
            let k = d - 1;
            let vs = &facet.vertices;
            for (a, &va) in vs.iter().enumerate() {
                for (b, &vb) in vs.iter().enumerate() {
                    let wb = f.w_amb[layout.slot[vb].expect("Γ1 vertex")];
                    for (cc, &vc) in vs.iter().enumerate() {
                        de[2] += -2.0 * p1_triple(meas, k, a, b, cc) * psi[va] * wb.dot(&f.u[vc]);
                    }
                }
            }
        }
        (br, de)
    }

    /// 2D boundary identities. On each Γ1 segment `s` runs along
    /// `rot90(ν)`, `κ` is the facet curvature used by the strain and
    /// `E = ∂_s z_T + κ z_ν` is the discrete tangential strain.
    fn boundary_terms(&self, f: &Fields, q: &[f64], tangential: bool) -> (Vec<f64>, Vec<f64>) {
        let mesh = self.mesh;
        let sys = self.sys;
        let layout = &sys.layout;
        let frames = self.frames;
        let len = if tangential { TANGENTIAL_TERMS.len() } else { NORMAL_TERMS.len() };
        let mut br = vec![0.0; len];
        let mut de = vec![0.0; len];
        let mu = sys.alpha;
        let cst = 2.0 * mu + lambda_star(sys.lambda, mu);
        let strains = tangential_strain_stress(mesh, layout, frames, &f.z, sys.lambda, mu);
        let coeffs = &sys.coefficients;
        for (e, &fi) in layout.facets.iter().enumerate() {
            let facet = &mesh.boundary_facets[fi];
            let (va, vb) = (facet.vertices[0], facet.vertices[1]);
            let s = [layout.slot[va].expect("Γ1 vertex"), layout.slot[vb].expect("Γ1 vertex")];
            let fr = [frames.slot[va].expect("frame"), frames.slot[vb].expect("frame")];
            let n = mesh.facet_normal(facet);
            let t = Point::new(-n.y, n.x, 0.0);
            let l = strains[e].measure;
            let sign = (mesh.vertices[vb] - mesh.vertices[va]).dot(&t).signum();
            let ds = |x: [f64; 2]| sign * (x[1] - x[0]) / l;
            let kappa = t.dot(&(0.5 * (frames.shape[fr[0]] + frames.shape[fr[1]]) * t));
            let avg = |c: &[f64]| 0.5 * (c[s[0]] + c[s[1]]);
            let (fc, gc, hc) = (avg(&coeffs.f), avg(&coeffs.g), avg(&coeffs.h));
            let e_t = strains[e].scalar_strain;
            let qn = [q[s[0]], q[s[1]]];
            let dq = ds(qn);
            let zt = [f.z.z_t[s[0]], f.z.z_t[s[1]]];
            let zn = [f.z.z_nu[s[0]], f.z.z_nu[s[1]]];
            let wt = [f.w.z_t[s[0]], f.w.z_t[s[1]]];
            let wn = [f.w.z_nu[s[0]], f.w.z_nu[s[1]]];
            let vt = [f.v[va].dot(&frames.tangents[fr[0]][0]), f.v[vb].dot(&frames.tangents[fr[1]][0])];
            let vn = [f.v[va].dot(&frames.normal[fr[0]]), f.v[vb].dot(&frames.normal[fr[1]])];
            let m2 = |x: [f64; 2], y: [f64; 2]| {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += p1_mass(l, 1, a, b) * x[a] * y[b];
                    }
                }
                acc
            };
            let m3 = |x: [f64; 2], y: [f64; 2], z: [f64; 2]| {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        for c in 0..2 {
                            acc += p1_triple(l, 1, a, b, c) * x[a] * y[b] * z[c];
                        }
                    }
                }
                acc
            };
            if tangential {
                br[0] += -2.0 * fc * e_t * m2(wt, qn);
                de[1] += -fc * dq * m2(wt, wt);
                de[2] += 2.0 * fc * kappa * m3(qn, wt, wn);
                de[3] += -cst * e_t * e_t * dq * l;
                de[4] += -2.0 * gc * e_t * m2(wt, qn);
                de[5] += -2.0 * hc * e_t * m2(zt, qn);
                de[6] += -2.0 * e_t * m2(vt, qn);
            } else {
                let dzn = ds(zn);
                let gn = [dzn - kappa * zt[0], dzn - kappa * zt[1]];
                br[0] += -2.0 * fc * m3(wn, gn, qn);
                de[1] += -fc * dq * m2(wn, wn);
                de[2] += -2.0 * fc * kappa * m3(qn, wn, wt);
                de[3] += -2.0 * cst * e_t * kappa * m2(gn, qn);
                de[4] += -dzn * dzn * dq * l;
                de[5] += 2.0 * dzn * kappa * sign * (zt[1] * qn[1] - zt[0] * qn[0]);
                de[6] += -2.0 * gc * m3(wn, gn, qn);
                de[7] += -2.0 * hc * m3(zn, gn, qn);
                de[8] += -2.0 * m3(vn, gn, qn);
                // arc-length frames on a curve carry no Christoffel symbols
                de[9] += 0.0;
            }
        }
        (br, de)
    }
}

/// Running evaluation of several identities along a trajectory.
pub struct IdentityAccumulator<'c, 'a> {
    ctx: &'c AuditContext<'a>,
    multipliers: Vec<Multiplier>,
    start: Option<Vec<Vec<f64>>>,
    last: Option<Vec<Vec<f64>>>,
    integrals: Vec<Vec<f64>>,
}

impl<'c, 'a> IdentityAccumulator<'c, 'a> {
    pub fn new(ctx: &'c AuditContext<'a>, multipliers: Vec<Multiplier>) -> Self {
        let integrals = multipliers.iter().map(|m| vec![0.0; m.term_names().len()]).collect();
        Self {
            ctx,
            multipliers,
            start: None,
            last: None,
            integrals,
        }
    }

    fn brackets(&self, s: &State) -> Result<Vec<Vec<f64>>> {
        self.multipliers.iter().map(|m| Ok(self.ctx.evaluate(m, s)?.0)).collect()
    }

    /// Records one step `prev → next` of length `dt`.
    pub fn step(&mut self, prev: &State, next: &State, dt: f64) -> Result<()> {
        if self.start.is_none() {
            self.start = Some(self.brackets(prev)?);
        }
        let mid = prev.lincomb(0.5, next, 0.5);
        for (m, acc) in self.multipliers.iter().zip(self.integrals.iter_mut()) {
            let (_, dens) = self.ctx.evaluate(m, &mid)?;
            acc.iter_mut().zip(dens).for_each(|(a, x)| *a += dt * x);
        }
        self.last = Some(self.brackets(next)?);
        Ok(())
    }

    pub fn finish(self) -> Vec<IdentityReport> {
        let h = self.ctx.mesh.h;
        self.multipliers
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let terms = m
                    .term_names()
                    .iter()
                    .enumerate()
                    .map(|(k, name)| {
                        let bracket = match (&self.start, &self.last) {
                            (Some(s), Some(l)) => l[i][k] - s[i][k],
                            _ => 0.0,
                        };
                        Term {
                            name: name.to_string(),
                            value: bracket + self.integrals[i][k],
                        }
                    })
                    .collect();
                IdentityReport::new(m.label(), h, terms)
            })
            .collect()
    }
}

/// Evaluates the given identities over a trajectory stored at every step.
pub fn identity_reports(traj: &Trajectory, ctx: &AuditContext, multipliers: Vec<Multiplier>) -> Result<Vec<IdentityReport>> {
    let states = traj.full_states()?;
    let mut acc = IdentityAccumulator::new(ctx, multipliers);
    for pair in states.windows(2) {
        acc.step(pair[0], pair[1], traj.dt)?;
    }
    Ok(acc.finish())
}

/// Combines identities with weights into one report; term names get the
/// label of their identity as prefix.
pub fn combine_reports(name: &str, parts: &[(f64, &IdentityReport)]) -> IdentityReport {
    let h = parts.first().map_or(0.0, |p| p.1.h);
    let terms = parts
        .iter()
        .flat_map(|(wgt, r)| {
            r.terms.iter().map(move |t| Term {
                name: format!("{}:{}", r.identity, t.name),
                value: wgt * t.value,
            })
        })
        .collect();
    IdentityReport::new(name, h, terms)
}

/// All audited identities of one run.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierReport {
    pub flux: IdentityReport,
    pub scalar: IdentityReport,
    /// Flux identity plus `(1 - d)/2` times the scalar identity plus the two
    /// boundary identities; d = 2 only.
    pub combined: Option<IdentityReport>,
    pub tangential: Option<IdentityReport>,
    pub normal: Option<IdentityReport>,
    /// Flux identity with `q = k`.
    pub normal_flux: IdentityReport,
    /// Scalar identity with `ψ = ξ_ε`.
    pub cutoff_scalar: IdentityReport,
}

impl MultiplierReport {
    pub fn all(&self) -> Vec<&IdentityReport> {
        let mut v = vec![&self.flux, &self.scalar];
        v.extend(self.tangential.iter());
        v.extend(self.normal.iter());
        v.extend(self.combined.iter());
        v.push(&self.normal_flux);
        v.push(&self.cutoff_scalar);
        v
    }
}

/// Runs every audit over a fully stored trajectory.
pub fn multiplier_residuals(traj: &Trajectory, ctx: &AuditContext) -> Result<MultiplierReport> {
    let d = ctx.mesh.dim;
    let mut mults = vec![
        ctx.radial_flux(),
        ctx.constant_scalar(1.0),
        ctx.normal_flux(),
        ctx.cutoff_scalar(),
    ];
    if d == 2 {
        mults.extend(ctx.boundary_multipliers()?);
    }
    let mut reports = identity_reports(traj, ctx, mults)?.into_iter();
    let mut next = || reports.next().expect("one report per multiplier");
    let (flux, scalar, normal_flux, cutoff_scalar) = (next(), next(), next(), next());
    let (tangential, normal, combined) = if d == 2 {
        let (t, n) = (next(), next());
        let c = combine_reports(
            "combined",
            &[(1.0, &flux), (0.5 * (1.0 - d as f64), &scalar), (1.0, &t), (1.0, &n)],
        );
        (Some(t), Some(n), Some(c))
    } else {
        (None, None, None)
    };
    Ok(MultiplierReport {
        flux,
        scalar,
        combined,
        tangential,
        normal,
        normal_flux,
        cutoff_scalar,
    })
}

/// `2∫|(∇u)(x - x0) + u|² / E` at up to `samples` stored states; `xi` is the
/// largest sampled ratio.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierBound {
    pub t: Vec<f64>,
    pub ratio: Vec<f64>,
    pub xi: f64,
}

pub fn multiplier_bound(traj: &Trajectory, ctx: &AuditContext, samples: usize) -> Result<MultiplierBound> {
    let mesh = ctx.mesh;
    let d = mesh.dim;
    let stored = &traj.states;
    let count = samples.min(stored.len()).max(1);
    let mut out = MultiplierBound {
        t: Vec::new(),
        ratio: Vec::new(),
        xi: 0.0,
    };
    for j in 0..count {
        let idx = if count == 1 { 0 } else { j * (stored.len() - 1) / (count - 1) };
        let (n, s) = &stored[idx];
        let e = traj.energy(*n);
        if !(e > 0.0) {
            continue;
        }
        let u = ctx.sys.free().expand(&s.u);
        let mut acc = 0.0;
        for (c, cell) in mesh.cells.iter().enumerate() {
            let g = ctx.gradient(c, &u);
            let m: Vec<Point> = cell.iter().map(|&v| g * (mesh.vertices[v] - ctx.region.x0) + u[v]).collect();
            for a in 0..cell.len() {
                for b in 0..cell.len() {
                    acc += p1_mass(ctx.cell_vol[c], d, a, b) * m[a].dot(&m[b]);
                }
            }
        }
        let r = 2.0 * acc / e;
        out.t.push(traj.times[*n]);
        out.ratio.push(r);
        out.xi = out.xi.max(r);
    }
    Ok(out)
}

/// Range of `(∫|z_T|² + ∫ε_T(z_T):ε_T(z_T)) / ∫|z_T|²` over the stored
/// states with nonzero tangential trace.
#[derive(Debug, Clone, Serialize)]
pub struct NormEquivalence {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

pub fn norm_equivalence(traj: &Trajectory, ctx: &AuditContext) -> Result<NormEquivalence> {
    let sys = ctx.sys;
    let layout = &sys.layout;
    let mut out = NormEquivalence {
        min: f64::INFINITY,
        max: 0.0,
        samples: 0,
    };
    for (_, s) in &traj.states {
        let mut z = BoundaryField::from_vec(layout, &s.z)?;
        z.z_nu.iter_mut().for_each(|x| *x = 0.0);
        let zv = z.to_vec();
        let l2 = crate::linalg::quad(&sys.boundary.mass, &zv);
        if !(l2 > 0.0) {
            continue;
        }
        let strain: f64 = tangential_strain_stress(ctx.mesh, layout, ctx.frames, &z, sys.lambda, sys.alpha)
            .iter()
            .map(|fs| fs.measure * fs.strain.component_mul(&fs.strain).sum())
            .sum();
        let r = (l2 + strain) / l2;
        out.min = out.min.min(r);
        out.max = out.max.max(r);
        out.samples += 1;
    }
    if out.samples == 0 {
        out.min = 0.0;
    }
    Ok(out)
}

/// Nodewise checks on the cutoff `ξ_ε`.
#[derive(Debug, Clone, Serialize)]
pub struct CutoffCheck {
    /// `0 ≤ ξ ≤ 1` everywhere.
    pub in_range: bool,
    /// `ξ = 1` on every vertex of a cell in `ω_{ε/2}`.
    pub plateau: bool,
    /// `ξ = 0` on every vertex outside the collar `ω`.
    pub support: bool,
    /// Largest cellwise `|∇ξ|²/ξ`.
    pub gradient_ratio: f64,
}

impl CutoffCheck {
    pub fn holds(&self) -> bool {
        self.in_range && self.plateau && self.support && self.gradient_ratio.is_finite()
    }
}

pub fn cutoff_check(mesh: &Mesh, region: &RegionFields) -> CutoffCheck {
    let xi = &region.xi_eps;
    let in_omega = region.omega_nodes(mesh);
    let plateau = mesh
        .cells
        .iter()
        .zip(&region.omega_half)
        .filter(|(_, &h)| h)
        .all(|(c, _)| c.iter().all(|&v| xi[v] == 1.0));
    CutoffCheck {
        in_range: xi.iter().all(|x| (0.0..=1.0).contains(x)),
        plateau,
        support: (0..xi.len()).all(|v| in_omega[v] || xi[v] == 0.0),
        gradient_ratio: region.xi_gradient_ratio(mesh),
    }
}
