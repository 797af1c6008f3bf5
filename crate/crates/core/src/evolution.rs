//! Semigroup dynamics `U' + AU = 0` on the discrete energy space.
//!
//! The generator is never formed. Its action uses the mass factorizations,
//! and the shifted resolvent `(I + θA)⁻¹` is solved by block elimination:
//! a sparse Cholesky factor of `P_θ = M + θD_a + θ²K_Ω` plus a dense Schur
//! complement on the (small) boundary block.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::assembly::{resolvent_load, shifted_blocks, SystemMatrices};
use crate::error::{Error, Result};
use crate::linalg::{dense_cholesky, dot, matvec, matvec_t, quad, SparseCholesky};

/// Semigroup vector `(u, v, z, w)`; `z` and `w` hold the Γ1 unknowns in the
/// node-major `(z_T, z_ν)` layout of [`crate::tangential::Gamma1Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl State {
    pub fn zeros(n_u: usize, n_z: usize) -> Self {
        Self {
            u: vec![0.0; n_u],
            v: vec![0.0; n_u],
            z: vec![0.0; n_z],
            w: vec![0.0; n_z],
        }
    }

    pub fn zeros_like(sys: &SystemMatrices) -> Self {
        Self::zeros(sys.n_u(), sys.n_z())
    }

    pub fn len(&self) -> usize {
        self.u.len() + self.v.len() + self.z.len() + self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, sys: &SystemMatrices) -> Result<()> {
        let (nu, nz) = (sys.n_u(), sys.n_z());
        if self.u.len() != nu || self.v.len() != nu || self.z.len() != nz || self.w.len() != nz {
            return Err(Error::State(format!(
                "state blocks ({}, {}, {}, {}) do not match system sizes ({nu}, {nu}, {nz}, {nz})",
                self.u.len(),
                self.v.len(),
                self.z.len(),
                self.w.len()
            )));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&self.u);
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.z);
        x.extend_from_slice(&self.w);
        x
    }

    pub fn from_vec(x: &[f64], n_u: usize, n_z: usize) -> Self {
        assert_eq!(x.len(), 2 * n_u + 2 * n_z);
        Self {
            u: x[..n_u].to_vec(),
            v: x[n_u..2 * n_u].to_vec(),
            z: x[2 * n_u..2 * n_u + n_z].to_vec(),
            w: x[2 * n_u + n_z..].to_vec(),
        }
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &State, b: f64) -> State {
        let f = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        State {
            u: f(&self.u, &other.u),
            v: f(&self.v, &other.v),
            z: f(&self.z, &other.z),
            w: f(&self.w, &other.w),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.to_vec().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Applies `A` using factorized mass matrices.
#[derive(Debug)]
pub struct Generator<'a> {
    pub sys: &'a SystemMatrices,
    mass: SparseCholesky,
    boundary_mass: SparseCholesky,
}

impl<'a> Generator<'a> {
    pub fn new(sys: &'a SystemMatrices) -> Result<Self> {
        Ok(Self {
            sys,
            mass: SparseCholesky::factor(&sys.bulk.mass)?,
            boundary_mass: SparseCholesky::factor(&sys.boundary.m_f)?,
        })
    }

    /// `AU = (-v, M⁻¹(K u + D_a v - Bᵀ w), -w, M_f⁻¹(K_z z + D_g w + B v))`.
    pub fn apply(&self, s: &State) -> Result<State> {
        s.check(self.sys)?;
        let sys = self.sys;
        let ku = matvec(&sys.bulk.stiffness, &s.u);
        let dv = matvec(&sys.bulk.damping, &s.v);
        let btw = matvec_t(&sys.coupling, &s.w);
        let rhs_v: Vec<f64> = (0..ku.len()).map(|i| ku[i] + dv[i] - btw[i]).collect();
        let kz = matvec(&sys.boundary_stiffness, &s.z);
        let dw = matvec(&sys.boundary.d_g, &s.w);
        let bv = matvec(&sys.coupling, &s.v);
        let rhs_w: Vec<f64> = (0..kz.len()).map(|i| kz[i] + dw[i] + bv[i]).collect();
        Ok(State {
            u: s.v.iter().map(|x| -x).collect(),
            v: self.mass.solve(&rhs_v),
            z: s.w.iter().map(|x| -x).collect(),
            w: self.boundary_mass.solve(&rhs_w),
        })
    }

    /// `(⟨AU, U⟩_ℍ, vᵀD_a v + wᵀD_g w)`; the two agree for the Galerkin
    /// generator because the stiffness and coupling terms cancel.
    pub fn pairing(&self, s: &State) -> Result<(f64, f64)> {
        let au = self.apply(s)?;
        Ok((self.sys.inner(&au, s), dissipation(self.sys, s)))
    }
}

/// Instantaneous dissipation rate `vᵀD_a v + wᵀD_g w`.
pub fn dissipation(sys: &SystemMatrices, s: &State) -> f64 {
    quad(&sys.bulk.damping, &s.v) + quad(&sys.boundary.d_g, &s.w)
}

pub fn dissipation_parts(sys: &SystemMatrices, s: &State) -> (f64, f64) {
    (quad(&sys.bulk.damping, &s.v), quad(&sys.boundary.d_g, &s.w))
}

/// Pairing without a prefactored generator.
pub fn generator_pairing(s: &State, sys: &SystemMatrices) -> Result<(f64, f64)> {
    Generator::new(sys)?.pairing(s)
}

/// Factorized `(I + θA)⁻¹`.
#[derive(Debug)]
pub struct ShiftedResolvent<'a> {
    pub sys: &'a SystemMatrices,
    pub theta: f64,
    p: SparseCholesky,
    p_mat: crate::linalg::SparseMatrix,
    q_mat: crate::linalg::SparseMatrix,
    /// `P_θ⁻¹ Bᵀ`, dense `n_u × n_z`.
    p_inv_bt: DMatrix<f64>,
    schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> ShiftedResolvent<'a> {
    pub fn new(sys: &'a SystemMatrices, theta: f64) -> Result<Self> {
        if theta == 0.0 || !theta.is_finite() {
            return Err(Error::Parameter(format!("resolvent shift θ must be finite and nonzero, got {theta}")));
        }
        let (p_mat, q_mat) = shifted_blocks(sys, theta);
        let p = SparseCholesky::factor(&p_mat)
            .map_err(|e| Error::Solver(format!("bulk block of I + θA with θ={theta}: {e}")))?;
        let (nu, nz) = (sys.n_u(), sys.n_z());
        let mut bt = DMatrix::zeros(nu, nz);
        for (i, j, v) in sys.coupling.triplet_iter() {
            bt[(j, i)] = *v;
        }
        let p_inv_bt = p.solve_columns(&bt);
        let mut s = crate::linalg::to_dense(&q_mat);
        s += (bt.transpose() * &p_inv_bt) * (theta * theta);
        let s = 0.5 * (&s + s.transpose());
        let schur = dense_cholesky(s, "boundary Schur complement")?;
        Ok(Self {
            sys,
            theta,
            p,
            p_mat,
            q_mat,
            p_inv_bt,
            schur,
        })
    }

    fn solve_vw(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let th = self.theta;
        let y = self.p.solve(r1);
        let by = self.p_inv_bt.tr_mul(&DVector::from_column_slice(r1));
        let rhs = DVector::from_iterator(r2.len(), r2.iter().zip(by.iter()).map(|(a, b)| a - th * b));
        let w = self.schur.solve(&rhs);
        let corr = &self.p_inv_bt * &w;
        let v: Vec<f64> = y.iter().zip(corr.iter()).map(|(a, b)| a + th * b).collect();
        (v, w.as_slice().to_vec())
    }

    /// Residual of the `(v, w)` system `[[P, -θBᵀ], [θB, Q]]`.
    fn residual(&self, v: &[f64], w: &[f64], r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sys = self.sys;
        let th = self.theta;
        let (p, q) = (&self.p_mat, &self.q_mat);
        let pv = matvec(p, v);
        let btw = matvec_t(&sys.coupling, w);
        let qw = matvec(q, w);
        let bv = matvec(&sys.coupling, v);
        let e1 = (0..v.len()).map(|i| r1[i] - (pv[i] - th * btw[i])).collect();
        let e2 = (0..w.len()).map(|i| r2[i] - (qw[i] + th * bv[i])).collect();
        (e1, e2)
    }

    /// Solves `(I + θA)U = k` and reconstructs `u = k₁ + θv`, `z = k₃ + θw`.
    pub fn solve(&self, k: &State) -> Result<State> {
        k.check(self.sys)?;
        let (v, w) = self.solve_velocities(k);
        Ok(crate::assembly::reconstruct_resolvent(k, v, w, self.theta))
    }

    fn solve_velocities(&self, k: &State) -> (Vec<f64>, Vec<f64>) {
        let psi = resolvent_load(k, self.sys, self.theta);
        let nu = self.sys.n_u();
        let (r1, r2) = psi.split_at(nu);
        self.solve_vw(r1, r2)
    }

    /// Solve followed by one step of iterative refinement on the `(v, w)`
    /// system; used where the residual must sit near round-off.
    pub fn solve_refined(&self, k: &State) -> Result<State> {
        k.check(self.sys)?;
        let psi = resolvent_load(k, self.sys, self.theta);
        let nu = self.sys.n_u();
        let (r1, r2) = psi.split_at(nu);
        let (mut v, mut w) = self.solve_vw(r1, r2);
        let (e1, e2) = self.residual(&v, &w, r1, r2);
        let (dv, dw) = self.solve_vw(&e1, &e2);
        v.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
        w.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        Ok(crate::assembly::reconstruct_resolvent(k, v, w, self.theta))
    }
}

/// `(I + A)⁻¹ k`.
pub fn solve_resolvent(k: &State, sys: &SystemMatrices) -> Result<State> {
    ShiftedResolvent::new(sys, 1.0)?.solve(k)
}

/// Time-stepping record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    /// `t_n = n·dt`, one entry per step including `t_0`.
    pub times: Vec<f64>,
    pub stride: usize,
    /// States at steps `0, stride, 2·stride, …` (and the final step).
    pub states: Vec<(usize, State)>,
    pub e_omega: Vec<f64>,
    pub e_gamma: Vec<f64>,
    /// Per-step dissipation increments `dt·v_mᵀD_a v_m` and `dt·w_mᵀD_g w_m`.
    pub diss_a: Vec<f64>,
    pub diss_g: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.e_omega[n] + self.e_gamma[n]
    }

    pub fn is_full(&self) -> bool {
        self.stride == 1
    }

    /// Full trajectory or an error naming the stride.
    pub fn full_states(&self) -> Result<Vec<&State>> {
        if !self.is_full() {
            return Err(Error::State(format!(
                "trajectory stored with stride {}; audits need every step (stride 1)",
                self.stride
            )));
        }
        Ok(self.states.iter().map(|(_, s)| s).collect())
    }

    pub fn final_state(&self) -> &State {
        &self.states.last().expect("trajectory holds the initial state").1
    }
}

/// `(E_Ω, E_Γ)` with `E_Ω = ½(vᵀMv + uᵀKu)` and
/// `E_Γ = ½(wᵀM_f w + zᵀ(H_h + K_elastic + K_LB) z)`.
pub fn energy_parts(s: &State, sys: &SystemMatrices) -> (f64, f64) {
    let [ku, mv, kz, mw] = sys.gram_blocks(s);
    (0.5 * (mv + ku), 0.5 * (mw + kz))
}

/// Implicit midpoint stepping `U^{n+1} = 2(I + dt/2 A)⁻¹Uⁿ - Uⁿ`.
/// Negative `dt` runs backwards in time.
pub fn integrate(u0: &State, t_end: f64, dt: f64, sys: &SystemMatrices, stride: usize) -> Result<Trajectory> {
    u0.check(sys)?;
    if dt == 0.0 || !dt.is_finite() || !t_end.is_finite() || t_end * dt < 0.0 {
        return Err(Error::Parameter(format!("need a finite nonzero dt of the same sign as T (dt={dt}, T={t_end})")));
    }
    if stride == 0 {
        return Err(Error::Parameter("store stride must be at least 1".into()));
    }
    let n_steps = (t_end / dt).round() as usize;
    if ((n_steps as f64) * dt - t_end).abs() > 1e-9 * t_end.abs().max(dt.abs()) {
        return Err(Error::Parameter(format!("T={t_end} is not a whole number of steps of dt={dt}")));
    }
    let res = ShiftedResolvent::new(sys, 0.5 * dt)?;
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(n_steps + 1),
        stride,
        states: vec![(0, u0.clone())],
        e_omega: Vec::with_capacity(n_steps + 1),
        e_gamma: Vec::with_capacity(n_steps + 1),
        diss_a: Vec::with_capacity(n_steps),
        diss_g: Vec::with_capacity(n_steps),
    };
    let (eo, eg) = energy_parts(u0, sys);
    traj.times.push(0.0);
    traj.e_omega.push(eo);
    traj.e_gamma.push(eg);
    let mut cur = u0.clone();
    for n in 0..n_steps {
        let mid = res
            .solve(&cur)
            .map_err(|e| Error::Solver(format!("step {n}: {e}")))?;
        let next = mid.lincomb(2.0, &cur, -1.0);
        let (da, dg) = dissipation_parts(sys, &mid);
        traj.diss_a.push(dt * da);
        traj.diss_g.push(dt * dg);
        let (eo, eg) = energy_parts(&next, sys);
        if !(eo.is_finite() && eg.is_finite()) {
            return Err(Error::Solver(format!("step {n}: non-finite energy")));
        }
        traj.times.push((n + 1) as f64 * dt);
        traj.e_omega.push(eo);
        traj.e_gamma.push(eg);
        if (n + 1) % stride == 0 || n + 1 == n_steps {
            traj.states.push((n + 1, next.clone()));
        }
        cur = next;
    }
    Ok(traj)
}

/// One eigenvalue of `-A` with its amplitude decay rate `-Re μ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Mode {
    pub re: f64,
    pub im: f64,
    pub decay_rate: f64,
}

/// Settings of the shift-invert Arnoldi iteration.
#[derive(Debug, Clone, Copy)]
pub struct ArnoldiOptions {
    pub initial_dim: usize,
    pub max_dim: usize,
    /// Relative Ritz residual accepted as converged.
    pub tol: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            initial_dim: 80,
            max_dim: 600,
            tol: 1e-10,
        }
    }
}

/// How the rightmost eigenvalues were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    /// Full spectrum of the assembled generator; the abscissa is exact.
    Dense,
    /// Shift-invert Arnoldi at a real shift. Only eigenvalues with moderate
    /// `|μ|` are reliably found, so weakly damped high frequencies can be
    /// missed.
    ShiftInvert,
}

/// State dimension up to which [`spectral_abscissa`] forms the generator
/// densely.
pub const DENSE_SPECTRUM_LIMIT: usize = 1500;

pub fn spectrum_method(sys: &SystemMatrices) -> SpectrumMethod {
    if 2 * sys.n_u() + 2 * sys.n_z() <= DENSE_SPECTRUM_LIMIT {
        SpectrumMethod::Dense
    } else {
        SpectrumMethod::ShiftInvert
    }
}

/// Eigenvalues of `-A` with the largest real parts, sorted descending.
/// Dense for small systems, shift-invert Arnoldi otherwise (see
/// [`spectrum_method`]).
pub fn spectral_abscissa(sys: &SystemMatrices, n_modes: usize) -> Result<Vec<Mode>> {
    match spectrum_method(sys) {
        SpectrumMethod::Dense => dense_spectrum(sys, n_modes),
        SpectrumMethod::ShiftInvert => spectral_abscissa_with(sys, n_modes, ArnoldiOptions::default()),
    }
}

/// The generator as a dense matrix, one [`Generator::apply`] per column.
pub fn dense_generator(sys: &SystemMatrices) -> Result<DMatrix<f64>> {
    let g = Generator::new(sys)?;
    let (nu, nz) = (sys.n_u(), sys.n_z());
    let n = 2 * nu + 2 * nz;
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = g.apply(&State::from_vec(&e, nu, nz))?.to_vec();
        a.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(a)
}

/// Rightmost eigenvalues of `-A` from the full dense spectrum.
pub fn dense_spectrum(sys: &SystemMatrices, n_modes: usize) -> Result<Vec<Mode>> {
    if n_modes == 0 {
        return Err(Error::Parameter("n_modes must be positive".into()));
    }
    let a = dense_generator(sys)?;
    let mu: Vec<Complex64> = a.complex_eigenvalues().iter().map(|l| -l).collect();
    if mu.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
        return Err(Error::NonConvergence("dense eigenvalue iteration produced non-finite values".into()));
    }
    Ok(to_modes(&rightmost(&mu, n_modes)))
}

/// Shift-invert Arnoldi on `R = (I + A)⁻¹` in the energy inner product. An
/// eigenvalue `ρ` of `R` maps to `μ = 1 - 1/ρ` for `-A`. The Krylov space
/// grows until the `n_modes` rightmost converged Ritz values repeat between
/// two sizes.
pub fn spectral_abscissa_with(sys: &SystemMatrices, n_modes: usize, opts: ArnoldiOptions) -> Result<Vec<Mode>> {
    if n_modes == 0 {
        return Err(Error::Parameter("n_modes must be positive".into()));
    }
    let res = ShiftedResolvent::new(sys, 1.0)?;
    let (nu, nz) = (sys.n_u(), sys.n_z());
    let n = 2 * nu + 2 * nz;
    let max_dim = opts.max_dim.min(n);
    let gram = sys.gram_matrix();
    let g_inner = |a: &[f64], gb: &[f64]| dot(a, gb);

    let start: Vec<f64> = (0..n).map(|k| ((k as f64 + 1.0) * 12.9898).sin() + 0.5 * ((k as f64) * 0.618).cos()).collect();
    let gs = matvec(&gram, &start);
    let nrm = g_inner(&start, &gs).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / nrm).collect()];
    let mut gbasis: Vec<Vec<f64>> = vec![gs.iter().map(|x| x / nrm).collect()];
    let mut hess = DMatrix::<f64>::zeros(max_dim + 1, max_dim);
    let mut previous: Option<Vec<Complex64>> = None;
    let mut check_at = opts.initial_dim.min(max_dim);
    let mut j = 0;
    let mut breakdown = false;
    while j < max_dim {
        let q = State::from_vec(&basis[j], nu, nz);
        let mut x = res.solve(&q)?.to_vec();
        // two passes of modified Gram-Schmidt in the energy inner product
        for _ in 0..2 {
            for (i, gq) in gbasis.iter().enumerate() {
                let c = g_inner(&x, gq);
                hess[(i, j)] += c;
                x.iter_mut().zip(&basis[i]).for_each(|(a, b)| *a -= c * b);
            }
        }
        let gx = matvec(&gram, &x);
        let beta = g_inner(&x, &gx).max(0.0).sqrt();
        hess[(j + 1, j)] = beta;
        j += 1;
        let scale = hess.view((0, 0), (j, j)).norm();
        if beta <= 1e-13 * scale {
            breakdown = true;
        } else {
            basis.push(x.iter().map(|a| a / beta).collect());
            gbasis.push(gx.iter().map(|a| a / beta).collect());
        }
        if j == check_at || j == max_dim || breakdown {
            let h = hess.view((0, 0), (j, j)).into_owned();
            let beta_last = if breakdown { 0.0 } else { hess[(j, j - 1)] };
            let ritz = converged_ritz(&h, beta_last, opts.tol);
            let top = rightmost(&ritz, n_modes);
            let exhausted = breakdown || j == n;
            if top.len() == n_modes {
                if exhausted {
                    return Ok(to_modes(&top));
                }
                if let Some(prev) = &previous {
                    if prev.len() == n_modes
                        && prev
                            .iter()
                            .zip(&top)
                            .all(|(a, b)| (a - b).norm() <= 1e-8 * (1.0 + b.norm()))
                    {
                        return Ok(to_modes(&top));
                    }
                }
            }
            if exhausted {
                break;
            }
            previous = Some(top);
            check_at = (check_at * 3 / 2).max(check_at + 1).min(max_dim);
        }
    }
    Err(Error::NonConvergence(format!(
        "shift-invert Arnoldi did not settle {n_modes} rightmost eigenvalues within dimension {max_dim}"
    )))
}

fn to_modes(mu: &[Complex64]) -> Vec<Mode> {
    mu.iter()
        .map(|m| Mode {
            re: m.re,
            im: m.im,
            decay_rate: -m.re,
        })
        .collect()
}

/// The `n` values with largest real part, descending; conjugate pairs keep
/// the member with nonnegative imaginary part first.
fn rightmost(mu: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut v = mu.to_vec();
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    v.truncate(n);
    v
}

/// Ritz values of `H` mapped to `μ = 1 - 1/ρ`, keeping those whose Arnoldi
/// residual `|β e_mᵀ y| / |ρ|` is below `tol`.
fn converged_ritz(h: &DMatrix<f64>, beta: f64, tol: f64) -> Vec<Complex64> {
    let eig = h.clone().complex_eigenvalues();
    let mut out = Vec::new();
    for rho in eig.iter() {
        if rho.norm() == 0.0 {
            continue;
        }
        let last = hessenberg_eigvec_tail(h, *rho);
        if (beta * last).abs() <= tol * rho.norm() {
            out.push(Complex64::new(1.0, 0.0) - Complex64::new(1.0, 0.0) / rho);
        }
    }
    out
}

/// Last component of the unit eigenvector of the upper Hessenberg `h` for
/// eigenvalue `rho`, by two sweeps of inverse iteration with an O(m²)
/// Hessenberg solve.
fn hessenberg_eigvec_tail(h: &DMatrix<f64>, rho: Complex64) -> f64 {
    let m = h.nrows();
    let shift = rho + Complex64::new(1e-14 * (1.0 + rho.norm()), 0.0);
    let mut y: Vec<Complex64> = (0..m).map(|k| Complex64::new(1.0 + 0.1 * (k as f64).sin(), 0.0)).collect();
    for _ in 0..3 {
        y = hessenberg_solve(h, shift, &y);
        let nrm = y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(nrm.is_finite() && nrm > 0.0) {
            return f64::INFINITY;
        }
        y.iter_mut().for_each(|c| *c /= nrm);
    }
    y[m - 1].norm()
}

/// Solves `(H - s I) y = b` for upper Hessenberg `H` by Gaussian elimination
/// with adjacent-row pivoting.
fn hessenberg_solve(h: &DMatrix<f64>, s: Complex64, b: &[Complex64]) -> Vec<Complex64> {
    let m = h.nrows();
    let mut a: Vec<Vec<Complex64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let x = Complex64::new(h[(i, j)], 0.0);
                    if i == j {
                        x - s
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let mut rhs = b.to_vec();
    for k in 0..m.saturating_sub(1) {
        if a[k + 1][k].norm() > a[k][k].norm() {
            a.swap(k, k + 1);
            rhs.swap(k, k + 1);
        }
        if a[k][k].norm() == 0.0 {
            a[k][k] = Complex64::new(1e-300, 0.0);
        }
        let f = a[k + 1][k] / a[k][k];
        if f.norm() != 0.0 {
            for j in k..m {
                let t = a[k][j];
                a[k + 1][j] -= f * t;
            }
            let t = rhs[k];
            rhs[k + 1] -= f * t;
        }
    }
    let mut y = vec![Complex64::new(0.0, 0.0); m];
    for i in (0..m).rev() {
        let mut acc = rhs[i];
        for j in i + 1..m {
            acc -= a[i][j] * y[j];
        }
        let d = if a[i][i].norm() == 0.0 { Complex64::new(1e-300, 0.0) } else { a[i][i] };
        y[i] = acc / d;
    }
    y
}

/// Writes a text checkpoint: one block header per field followed by one
/// value per line at 17 significant digits.
pub fn checkpoint_text(s: &State, t: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# elastowave state");
    let _ = writeln!(out, "t {:.16e}", t);
    for (name, block) in [("u", &s.u), ("v", &s.v), ("z", &s.z), ("w", &s.w)] {
        let _ = writeln!(out, "{name} {}", block.len());
        for x in block {
            let _ = writeln!(out, "{:.16e}", x);
        }
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<(State, f64)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let t_line = lines.next().ok_or_else(|| bad("missing time"))?;
    let t = t_line
        .strip_prefix("t ")
        .ok_or_else(|| bad("expected time header"))?
        .trim()
        .parse::<f64>()
        .map_err(|_| bad("bad time"))?;
    let mut blocks = Vec::new();
    for name in ["u", "v", "z", "w"] {
        let header = lines.next().ok_or_else(|| bad("missing block header"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(name) {
            return Err(bad(&format!("expected block '{name}'")));
        }
        let len: usize = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad("bad block length"))?;
        let vals = (0..len)
            .map(|_| {
                lines
                    .next()
                    .ok_or_else(|| bad("truncated block"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad("bad value"))
            })
            .collect::<Result<Vec<f64>>>()?;
        blocks.push(vals);
    }
    let w = blocks.pop().unwrap();
    let z = blocks.pop().unwrap();
    let v = blocks.pop().unwrap();
    let u = blocks.pop().unwrap();
    Ok((State { u, v, z, w }, t))
}

pub fn write_checkpoint(path: &Path, s: &State, t: f64) -> Result<()> {
    std::fs::write(path, checkpoint_text(s, t))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(State, f64)> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
