use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::assembly::SystemMatrices;
use crate::error::{Error, Result};
use crate::evolution::{energy_parts, State, Trajectory};
use crate::linalg::quad;

/// `(E_Ω, E_Γ)` of one state.
pub fn energy(u: &State, sys: &SystemMatrices) -> (f64, f64) {
    energy_parts(u, sys)
}

/// Energy history of a run together with the cumulative dissipation and the
/// per-sample residual of the dissipation identity.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyTrace {
    pub t: Vec<f64>,
    pub e_omega: Vec<f64>,
    pub e_gamma: Vec<f64>,
    pub diss_a_cum: Vec<f64>,
    pub diss_g_cum: Vec<f64>,
    /// `E(t_n) - E(0) + ∫_0^{t_n} (a|u'|² + g|z'|²)`.
    pub identity_residual: Vec<f64>,
}

impl EnergyTrace {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let n = traj.times.len();
        let mut diss_a_cum = Vec::with_capacity(n);
        let mut diss_g_cum = Vec::with_capacity(n);
        let (mut ca, mut cg) = (0.0, 0.0);
        diss_a_cum.push(0.0);
        diss_g_cum.push(0.0);
        for (da, dg) in traj.diss_a.iter().zip(&traj.diss_g) {
            ca += da;
            cg += dg;
            diss_a_cum.push(ca);
            diss_g_cum.push(cg);
        }
        let e0 = traj.e_omega[0] + traj.e_gamma[0];
        let identity_residual = (0..n)
            .map(|k| traj.e_omega[k] + traj.e_gamma[k] - e0 + diss_a_cum[k] + diss_g_cum[k])
            .collect();
        Self {
            t: traj.times.clone(),
            e_omega: traj.e_omega.clone(),
            e_gamma: traj.e_gamma.clone(),
            diss_a_cum,
            diss_g_cum,
            identity_residual,
        }
    }

    /// Builds a trace from a bare energy series (no dissipation record).
    pub fn from_energy(t: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if t.len() != e.len() || t.is_empty() {
            return Err(Error::Parameter("time and energy series must be nonempty and of equal length".into()));
        }
        let n = t.len();
        Ok(Self {
            t,
            e_omega: e,
            e_gamma: vec![0.0; n],
            diss_a_cum: vec![0.0; n],
            diss_g_cum: vec![0.0; n],
            identity_residual: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn total(&self, k: usize) -> f64 {
        self.e_omega[k] + self.e_gamma[k]
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.total(k)).collect()
    }

    /// Index of a grid time; off-grid times are refused.
    pub fn index_of(&self, s: f64) -> Result<usize> {
        let tol = 1e-9 * self.t.last().map_or(1.0, |x| x.abs().max(1.0));
        self.t
            .iter()
            .position(|&t| (t - s).abs() <= tol)
            .ok_or_else(|| Error::Parameter(format!("time {s} is not on the trajectory grid")))
    }

    /// Largest `|residual(s2) - residual(s1)|` over all grid pairs, i.e. the
    /// worst violation of the dissipation identity between any two samples.
    pub fn max_pair_residual(&self) -> f64 {
        let (lo, hi) = self
            .identity_residual
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        if self.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Writes `t,E_total,E_omega,E_gamma,diss_a_cum,diss_g_cum,identity_residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "E_total", "E_omega", "E_gamma", "diss_a_cum", "diss_g_cum", "identity_residual"])?;
        for k in 0..self.len() {
            w.write_record([
                format!("{:.10e}", self.t[k]),
                format!("{:.16e}", self.total(k)),
                format!("{:.16e}", self.e_omega[k]),
                format!("{:.16e}", self.e_gamma[k]),
                format!("{:.16e}", self.diss_a_cum[k]),
                format!("{:.16e}", self.diss_g_cum[k]),
                format!("{:.16e}", self.identity_residual[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// `E(s2) - E(s1) + ∫_{s1}^{s2}(a|u'|² + g|z'|²)` for grid times `s1 < s2`.
pub fn decay_identity_residual(trace: &EnergyTrace, s1: f64, s2: f64) -> Result<f64> {
    if !(s1 < s2) {
        return Err(Error::Parameter(format!("need s1 < s2, got {s1} and {s2}")));
    }
    let (i, j) = (trace.index_of(s1)?, trace.index_of(s2)?);
    let diss = trace.diss_a_cum[j] - trace.diss_a_cum[i] + trace.diss_g_cum[j] - trace.diss_g_cum[i];
    Ok(trace.total(j) - trace.total(i) + diss)
}

/// The four boundary energy densities integrated over Γ1:
/// `[∫f|z'|², ∫h|z|², ∫σ_T⁰:ε_T⁰, ∫|∇_T z_ν|²]`. They sum to `2 E_Γ`.
pub fn boundary_energy_terms(u: &State, sys: &SystemMatrices) -> [f64; 4] {
    let [hh, kel, klb] = sys.boundary.energy_terms(&u.z);
    [quad(&sys.boundary.m_f, &u.w), hh, kel, klb]
}

/// Boundary energy split per stored sample.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryEnergyReport {
    pub t: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub reaction: Vec<f64>,
    pub tangential: Vec<f64>,
    pub normal_gradient: Vec<f64>,
}

impl BoundaryEnergyReport {
    pub fn sum(&self, k: usize) -> f64 {
        self.kinetic[k] + self.reaction[k] + self.tangential[k] + self.normal_gradient[k]
    }
}

pub fn boundary_energy_report(traj: &Trajectory, sys: &SystemMatrices) -> BoundaryEnergyReport {
    let mut r = BoundaryEnergyReport {
        t: Vec::new(),
        kinetic: Vec::new(),
        reaction: Vec::new(),
        tangential: Vec::new(),
        normal_gradient: Vec::new(),
    };
    for (n, s) in &traj.states {
        let [k, h, e, g] = boundary_energy_terms(s, sys);
        r.t.push(traj.times[*n]);
        r.kinetic.push(k);
        r.reaction.push(h);
        r.tangential.push(e);
        r.normal_gradient.push(g);
    }
    r
}

/// The three quantities of the boundary energy estimate for a chosen `τ`:
/// the time integral of `∫_{Γ1} σ_T⁰:ε_T⁰ + |z|² + |∇_T z_ν|²`, `E(0)` and
/// `∫E dt`. `implied_constant` is the smallest `Ĉ` making
/// `lhs ≤ Ĉ E(0)/τ + τ∫E` hold on this run (zero when it already holds).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryEstimate {
    pub tau: f64,
    pub lhs: f64,
    pub e0: f64,
    pub energy_integral: f64,
    pub implied_constant: f64,
}

/// Time integrals use the trapezoid rule over the stored samples.
pub fn boundary_estimate(traj: &Trajectory, sys: &SystemMatrices, tau: f64) -> Result<BoundaryEstimate> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    let samples: Vec<(f64, f64)> = traj
        .states
        .iter()
        .map(|(n, s)| {
            let [_, kel, klb] = sys.boundary.energy_terms(&s.z);
            (traj.times[*n], kel + klb + quad(&sys.boundary.mass, &s.z))
        })
        .collect();
    let lhs = trapezoid(&samples);
    let energies: Vec<(f64, f64)> = (0..traj.times.len()).map(|k| (traj.times[k], traj.energy(k))).collect();
    let energy_integral = trapezoid(&energies);
    let e0 = traj.energy(0);
    let implied_constant = if e0 > 0.0 { (tau * (lhs - tau * energy_integral) / e0).max(0.0) } else { 0.0 };
    Ok(BoundaryEstimate {
        tau,
        lhs,
        e0,
        energy_integral,
        implied_constant,
    })
}

pub(crate) fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples.windows(2).map(|p| 0.5 * (p[1].0 - p[0].0) * (p[0].1 + p[1].1)).sum()
}
