use serde::Serialize;

use crate::assembly::SystemMatrices;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::linalg::{axpy, dot, matvec, quad, scale, SparseCholesky};

/// Discrete trace constant: `∫_{Γ1}|u|² ≤ C_p² ‖u‖²_𝕍` for every discrete
/// `u`, with equality at `eigenvector`.
#[derive(Debug, Clone, Serialize)]
pub struct PoincareConstant {
    pub c_p: f64,
    /// `C_p²`, the largest eigenvalue of `T x = θ K x`.
    pub theta: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

/// `uᵀ T u / uᵀ K u` with `T` the Γ1 trace mass and `K` the bulk stiffness.
pub fn trace_ratio(sys: &SystemMatrices, u: &[f64]) -> f64 {
    quad(&sys.trace_mass, u) / quad(&sys.bulk.stiffness, u)
}

/// Relative Ritz residual accepted for the top eigenpair.
pub const RITZ_TOL: f64 = 1e-12;

/// Lanczos on `K⁻¹T`, which is self-adjoint in the `K` inner product, with
/// full reorthogonalization. Stops when the top Ritz pair has relative
/// residual below [`RITZ_TOL`] or the Krylov space becomes invariant (it
/// does within `rank T + 1` steps). The returned eigenvector has
/// `xᵀKx = 1` and `theta` is its Rayleigh quotient.
pub fn poincare_constant(sys: &SystemMatrices) -> Result<PoincareConstant> {
    let n = sys.n_u();
    if n == 0 {
        return Err(Error::Parameter("no free bulk unknowns".into()));
    }
    let k = &sys.bulk.stiffness;
    let chol = SparseCholesky::factor(k)?;
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64 + 1.0) * 0.7548776662).sin()).collect();
    let ks = matvec(k, &start);
    let nrm = dot(&start, &ks).sqrt();
    let mut basis = vec![scale(1.0 / nrm, &start)];
    let mut kbasis = vec![scale(1.0 / nrm, &ks)];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    for j in 0..n {
        let tq = matvec(&sys.trace_mass, &basis[j]);
        let mut z = chol.solve(&tq);
        alpha.push(dot(&basis[j], &tq));
        for _ in 0..2 {
            for (q, kq) in basis.iter().zip(&kbasis) {
                let c = dot(&z, kq);
                z.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let kz = matvec(k, &z);
        let b = dot(&z, &kz).max(0.0).sqrt();
        let m = alpha.len();
        let mut tri = DMatrix::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alpha[i];
            if i + 1 < m {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let top = eig.eigenvalues.imax();
        let theta_ritz = eig.eigenvalues[top];
        let s = eig.eigenvectors.column(top);
        let invariant = b <= 1e-14 * theta_ritz.abs().max(f64::MIN_POSITIVE);
        if invariant || b * s[m - 1].abs() <= RITZ_TOL * theta_ritz || j + 1 == n {
            if !(theta_ritz > 0.0) {
                return Err(Error::NonConvergence("trace operator vanished on the Krylov space".into()));
            }
            let mut x = vec![0.0; n];
            for (i, q) in basis.iter().enumerate() {
                axpy(s[i], q, &mut x);
            }
            let kx = quad(k, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= kx);
            let theta = trace_ratio(sys, &x);
            return Ok(PoincareConstant {
                c_p: theta.sqrt(),
                theta,
                iterations: m,
                eigenvector: x,
            });
        }
        beta.push(b);
        basis.push(scale(1.0 / b, &z));
        kbasis.push(scale(1.0 / b, &kz));
    }
    unreachable!("Lanczos returns by step n")
}
