use serde::Serialize;

use super::energy::EnergyTrace;

/// Exponential envelope fitted to an energy history.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Smallest constant with `E(t) ≤ K1 e^{-t/K2} E(0)` on the window, at least 1.
    pub k1: f64,
    pub k2: f64,
    /// `exp(intercept)` of the least-squares line, i.e. the fitted `E` at `t = 0`.
    pub prefactor: f64,
    pub slope: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub n_points: usize,
    /// `|corr(t, log E)|` on the window.
    pub goodness: f64,
    /// `M` with `K1 = (M + 1)/M`; absent when `K1 = 1`.
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("decay fit rejected: {reason}")]
pub struct FitRejected {
    pub reason: String,
}

fn reject(reason: impl Into<String>) -> FitRejected {
    FitRejected { reason: reason.into() }
}

/// Acceptance threshold on the log-linear correlation.
pub const MIN_CORRELATION: f64 = 0.99;

/// Least squares on `log E` over the longest suffix window whose correlation
/// reaches [`MIN_CORRELATION`]. The window holds at least a quarter of the
/// samples (and at least five).
pub fn fit_decay(trace: &EnergyTrace) -> Result<DecayFit, FitRejected> {
    let e = trace.totals();
    let n = e.len();
    if n < 5 {
        return Err(reject(format!("only {n} samples")));
    }
    if let Some(k) = e.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(reject(format!("nonpositive energy {} at t = {}", e[k], trace.t[k])));
    }
    let y: Vec<f64> = e.iter().map(|x| x.ln()).collect();
    let drop = y[0] - y[n - 1];
    if !(drop > 1e-6) {
        return Err(reject(format!("non-decaying: log E(0) - log E(T) = {drop:.3e}")));
    }
    let t = &trace.t;
    // suffix sums so every window [i, n) is O(1)
    let mut acc = [0.0f64; 5];
    let mut suffix = vec![[0.0f64; 5]; n + 1];
    for k in (0..n).rev() {
        let (tk, yk) = (t[k] - t[n - 1], y[k]);
        acc[0] += tk;
        acc[1] += yk;
        acc[2] += tk * tk;
        acc[3] += yk * yk;
        acc[4] += tk * yk;
        suffix[k] = acc;
    }
    let min_len = (n / 4).max(5);
    let stats = |i: usize| {
        let [st, sy, stt, syy, sty] = suffix[i];
        let m = (n - i) as f64;
        let vt = stt - st * st / m;
        let vy = syy - sy * sy / m;
        let cty = sty - st * sy / m;
        let slope = cty / vt;
        let corr = if vt > 0.0 && vy > 0.0 { cty / (vt * vy).sqrt() } else { 0.0 };
        let icpt = (sy - slope * st) / m - slope * t[n - 1];
        (slope, icpt, corr)
    };
    let start = (0..=n - min_len).find(|&i| {
        let (slope, _, corr) = stats(i);
        slope < 0.0 && -corr >= MIN_CORRELATION
    });
    let Some(i) = start else {
        return Err(reject(format!(
            "no suffix window of at least {min_len} samples is log-linear with correlation ≥ {MIN_CORRELATION}"
        )));
    };
    let (slope, intercept, corr) = stats(i);
    let k2 = -1.0 / slope;
    let k1 = (i..n)
        .map(|k| e[k] * (t[k] / k2).exp() / e[0])
        .fold(1.0f64, f64::max);
    Ok(DecayFit {
        k1,
        k2,
        prefactor: intercept.exp(),
        slope,
        intercept,
        window: [t[i], t[n - 1]],
        n_points: n - i,
        goodness: -corr,
        m: (k1 > 1.0).then(|| 1.0 / (k1 - 1.0)),
    })
}
