//! Scenario configuration and the end-to-end pipeline
//! geometry → assembly → evolution → analysis.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    boundary_energy_report, boundary_estimate, convergence_order, cutoff_check, fit_decay, multiplier_bound,
    multiplier_residuals, norm_equivalence, poincare_constant, AuditContext, BoundaryEstimate, ConvergenceOrder,
    CutoffCheck, DecayFit, EnergyTrace, MultiplierBound, MultiplierReport, NormEquivalence, PoincareConstant,
};
use crate::assembly::{assemble_system, assemble_system_unchecked, phi_quadratic, MaterialParams, SystemMatrices};
use crate::error::{Error, Result};
use crate::evolution::{
    integrate, spectral_abscissa, spectrum_method, Generator, Mode, ShiftedResolvent, SpectrumMethod, State, Trajectory,
};
use crate::geometry::{
    build_mesh, build_region_fields, classify_boundary, compute_boundary_frames, facet_support_values,
    BoundaryFrame, BoundaryLabel, DampingProfile, Mesh, MeshKind, Point, RegionFields,
};
use crate::linalg::quad;
use crate::tangential::{BoundaryCoefficients, Gamma1Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: MeshKind,
    pub r_in: f64,
    pub r_out: f64,
    pub h: f64,
    /// Star center; missing components are zero.
    #[serde(default)]
    pub x0: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingConfig {
    pub a0: f64,
    pub eps: f64,
    #[serde(default)]
    pub profile: DampingProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Keep every `store_stride`-th state; 1 when audits are enabled.
    #[serde(default)]
    pub store_stride: Option<usize>,
}

/// Initial velocity profile; `u`, `z` and `w` start at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// `v = (r_out - |x|)² c`, vanishing on Γ0 only.
    #[default]
    Profile,
    /// `v = sin⁴(π(|x| - r_in)/(r_out - r_in)) c`, vanishing to fourth order
    /// on both boundaries. Use this for the identity audits, which need
    /// data compatible with the boundary coupling.
    Bump,
}

fn default_modes() -> usize {
    6
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub audit: bool,
    #[serde(default)]
    pub spectrum: bool,
    #[serde(default)]
    pub poincare: bool,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    /// `τ` of the boundary energy estimate report.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            audit: false,
            spectrum: false,
            poincare: false,
            n_modes: default_modes(),
            tau: default_tau(),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub damping: DampingConfig,
    pub boundary: BoundaryConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialKind,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ScenarioConfig {
    /// Damped annulus `1 ≤ r ≤ 2` with unit coefficients, `h = 0.25`,
    /// `dt = 0.01`, `T = 40`.
    pub fn reference() -> Self {
        Self {
            geometry: GeometryConfig {
                kind: MeshKind::Annulus,
                r_in: 1.0,
                r_out: 2.0,
                h: 0.25,
                x0: vec![0.0, 0.0],
                delta: 1.0,
            },
            material: MaterialConfig { lambda: 1.0, alpha: 1.0 },
            damping: DampingConfig {
                a0: 1.0,
                eps: 0.3,
                profile: DampingProfile::Constant,
            },
            boundary: BoundaryConfig { f: 1.0, g: 1.0, h: 1.0 },
            time: TimeConfig {
                dt: 0.01,
                t_end: 40.0,
                store_stride: None,
            },
            initial: InitialKind::Profile,
            analysis: AnalysisConfig::default(),
            output: default_output(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        match self.geometry.kind {
            MeshKind::Annulus => 2,
            MeshKind::Shell => 3,
        }
    }

    pub fn x0(&self) -> Result<Point> {
        let x = &self.geometry.x0;
        if x.len() > self.dim() {
            return Err(Error::Parameter(format!("x0 has {} components in dimension {}", x.len(), self.dim())));
        }
        let mut p = Point::zeros();
        for (i, v) in x.iter().enumerate() {
            p[i] = *v;
        }
        Ok(p)
    }

    pub fn store_stride(&self) -> usize {
        self.time.store_stride.unwrap_or(if self.analysis.audit { 1 } else { 10 })
    }

    /// Parameter checks that need no mesh. The boundary coefficient floors are checked here
    /// too, so a vanishing coefficient fails before any assembly.
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        finite_pos("geometry.h", self.geometry.h)?;
        finite_pos("geometry.delta", self.geometry.delta)?;
        finite_pos("material.lambda", self.material.lambda)?;
        finite_pos("material.alpha", self.material.alpha)?;
        finite_pos("damping.eps", self.damping.eps)?;
        finite_pos("time.dt", self.time.dt)?;
        finite_pos("time.T", self.time.t_end)?;
        if !(self.damping.a0 > 0.0) {
            return Err(Error::Assumption(format!("damping floor a0 must be positive, got {}", self.damping.a0)));
        }
        for (name, v) in [("f", self.boundary.f), ("g", self.boundary.g), ("h", self.boundary.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Assumption(format!("boundary coefficient {name} = {v} violates its positive floor")));
            }
        }
        if self.analysis.n_modes == 0 {
            return Err(Error::Parameter("analysis.n_modes must be positive".into()));
        }
        finite_pos("analysis.tau", self.analysis.tau)?;
        if self.analysis.audit && self.store_stride() != 1 {
            return Err(Error::Parameter("identity audits need every state stored (store_stride = 1)".into()));
        }
        if self.time.store_stride == Some(0) {
            return Err(Error::Parameter("store_stride must be at least 1".into()));
        }
        self.x0()?;
        Ok(())
    }

    pub fn with_h(&self, h: f64) -> Self {
        let mut c = self.clone();
        c.geometry.h = h;
        c
    }
}

/// Nodewise summary of the four standing assumptions on one mesh.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Damping floor: smallest damping on collar cells vs `a0`.
    pub min_collar_damping: f64,
    pub damping_floor: f64,
    pub collar_cells: usize,
    pub damping_holds: bool,
    /// Boundary coefficient floors.
    pub coefficient_floors: [f64; 3],
    pub floors_hold: bool,
    /// Observation condition on Γ0: smallest `(x - x0)·ν` over Γ0 facets vs `δ`.
    pub gamma0_min_support: f64,
    pub delta: f64,
    pub gamma0_observed: bool,
    /// Sign condition on Γ1: largest `(x - x0)·ν` over Γ1 facets.
    pub gamma1_max_support: f64,
    pub gamma1_sign_holds: bool,
}

/// Mesh, frames, regions and assembled matrices of one configuration.
#[derive(Debug)]
pub struct Problem {
    pub config: ScenarioConfig,
    pub mesh: Mesh,
    pub frames: BoundaryFrame,
    pub region: RegionFields,
    pub sys: SystemMatrices,
}

impl Problem {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        Self::build_inner(config, false)
    }

    /// The conservative limit `a ≡ 0`, `g ≡ 0` on the same geometry; the
    /// damping and coefficient floors are deliberately bypassed.
    pub fn build_conservative(config: &ScenarioConfig) -> Result<Self> {
        Self::build_inner(config, true)
    }

    fn build_inner(config: &ScenarioConfig, conservative: bool) -> Result<Self> {
        config.validate()?;
        let g = &config.geometry;
        let mesh = build_mesh(g.kind, g.r_in, g.r_out, g.h)?;
        let x0 = config.x0()?;
        let mesh = classify_boundary(&mesh, &x0, g.delta)?;
        let frames = compute_boundary_frames(&mesh)?;
        let d = &config.damping;
        let region = build_region_fields(&mesh, &frames, x0, g.delta, d.eps, d.a0, d.profile)?;
        let layout = Gamma1Layout::new(&mesh);
        let b = &config.boundary;
        let mut coefficients = BoundaryCoefficients::constant(&layout, b.f, b.g, b.h);
        let mut a_field = region.a_field.clone();
        if conservative {
            coefficients.g.iter_mut().for_each(|x| *x = 0.0);
            a_field.iter_mut().for_each(|x| *x = 0.0);
        }
        let params = MaterialParams {
            lambda: config.material.lambda,
            alpha: config.material.alpha,
            coefficients,
            a_field,
        };
        let sys = if conservative {
            assemble_system_unchecked(&mesh, &frames, &params)?
        } else {
            assemble_system(&mesh, &frames, &region, &params)?
        };
        Ok(Self {
            config: config.clone(),
            mesh,
            frames,
            region,
            sys,
        })
    }

    /// `u = 0`, `z = 0`, `w = 0` and `v = φ(|x|) c` with
    /// `c = (1, 0.5, 0.25)` and `φ` chosen by [`InitialKind`].
    pub fn initial_state(&self) -> State {
        let g = &self.config.geometry;
        let c = Point::new(1.0, 0.5, if self.mesh.dim == 3 { 0.25 } else { 0.0 });
        let phi = |r: f64| match self.config.initial {
            InitialKind::Profile => (g.r_out - r).powi(2),
            InitialKind::Bump => (std::f64::consts::PI * (r - g.r_in) / (g.r_out - g.r_in)).sin().powi(4),
        };
        let field: Vec<Point> = self.mesh.vertices.iter().map(|p| c * phi(p.norm())).collect();
        let mut s = State::zeros_like(&self.sys);
        s.v = self.sys.free().restrict(&field);
        s
    }

    pub fn audit_context(&self) -> Result<AuditContext<'_>> {
        AuditContext::new(&self.mesh, &self.sys, &self.frames, &self.region)
    }

    pub fn simulate(&self) -> Result<Trajectory> {
        let t = &self.config.time;
        integrate(&self.initial_state(), t.t_end, t.dt, &self.sys, self.config.store_stride())
    }

    pub fn assumptions(&self) -> AssumptionReport {
        let x0 = self.region.x0;
        let vals = facet_support_values(&self.mesh, &x0);
        let mut min0 = f64::INFINITY;
        let mut max1 = f64::NEG_INFINITY;
        for (f, s) in self.mesh.boundary_facets.iter().zip(vals) {
            match f.label {
                BoundaryLabel::Gamma0 => min0 = min0.min(s),
                BoundaryLabel::Gamma1 => max1 = max1.max(s),
            }
        }
        let collar: Vec<f64> = self
            .region
            .omega
            .iter()
            .zip(&self.sys.a_field)
            .filter(|(w, _)| **w)
            .map(|(_, a)| *a)
            .collect();
        let amin = collar.iter().copied().fold(f64::INFINITY, f64::min);
        let c = &self.sys.coefficients;
        let floors_hold = c.check().is_ok();
        AssumptionReport {
            min_collar_damping: amin,
            damping_floor: self.region.a0,
            collar_cells: collar.len(),
            damping_holds: !collar.is_empty() && amin >= self.region.a0 && self.sys.a_field.iter().all(|&a| a >= 0.0),
            coefficient_floors: [c.f0, c.g0, c.h0],
            floors_hold,
            gamma0_min_support: min0,
            delta: self.region.delta,
            gamma0_observed: min0 >= self.region.delta,
            gamma1_max_support: max1,
            gamma1_sign_holds: max1 <= 0.0,
        }
    }
}

/// Uniform random state with entries in `[-1, 1]`.
pub fn random_state<R: Rng>(sys: &SystemMatrices, rng: &mut R) -> State {
    let mut s = State::zeros_like(sys);
    for block in [&mut s.u, &mut s.v, &mut s.z, &mut s.w] {
        block.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..=1.0));
    }
    s
}

/// One named pass/fail check with the measured value and its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value >= tolerance,
            value,
            tolerance,
        }
    }
}

/// Outcome of the generator checks on random states.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventCheck {
    pub samples: usize,
    /// `max |⟨AU,U⟩_ℍ - (vᵀD_a v + wᵀD_g w)| / ‖U‖²_ℍ`.
    pub pairing_defect: f64,
    /// `min ⟨AU,U⟩_ℍ / ‖U‖²_ℍ`.
    pub min_pairing: f64,
    /// `max ‖(I + A)U - k‖_ℍ / ‖k‖_ℍ`.
    pub resolvent_residual: f64,
    /// `u = k₁ + v` and `z = k₃ + w` hold bit for bit.
    pub reconstruction_exact: bool,
    /// `min Φ(V,V) / (vᵀK_Ω v + wᵀ(H_h + K_elastic + K_LB)w)`.
    pub coercivity: f64,
    pub coercivity_bound: f64,
    pub checks: Vec<Check>,
}

pub fn resolvent_check(problem: &Problem, samples: usize, seed: u64) -> Result<ResolventCheck> {
    use rand::SeedableRng;
    let sys = &problem.sys;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let gen = Generator::new(sys)?;
    let res = ShiftedResolvent::new(sys, 1.0)?;
    let mut out = ResolventCheck {
        samples,
        pairing_defect: 0.0,
        min_pairing: f64::INFINITY,
        resolvent_residual: 0.0,
        reconstruction_exact: true,
        coercivity: f64::INFINITY,
        coercivity_bound: 1.0f64.min(1.0 / sys.h0),
        checks: Vec::new(),
    };
    for _ in 0..samples {
        let u = random_state(sys, &mut rng);
        let nrm = sys.norm_sq(&u);
        let (pair, diss) = gen.pairing(&u)?;
        out.pairing_defect = out.pairing_defect.max((pair - diss).abs() / nrm);
        out.min_pairing = out.min_pairing.min(pair / nrm);

        let k = random_state(sys, &mut rng);
        let x = res.solve_refined(&k)?;
        let ax = gen.apply(&x)?;
        let r = x.lincomb(1.0, &ax, 1.0).lincomb(1.0, &k, -1.0);
        out.resolvent_residual = out.resolvent_residual.max((sys.norm_sq(&r) / sys.norm_sq(&k)).sqrt());
        let exact_u = x.u.iter().zip(&k.u).zip(&x.v).all(|((u, k1), v)| *u == k1 + v);
        let exact_z = x.z.iter().zip(&k.z).zip(&x.w).all(|((z, k3), w)| *z == k3 + w);
        out.reconstruction_exact &= exact_u && exact_z;
        let phi = phi_quadratic(sys, &x.v, &x.w, 1.0);
        let base = quad(&sys.bulk.stiffness, &x.v) + quad(&sys.boundary_stiffness, &x.w);
        out.coercivity = out.coercivity.min(phi / base);
    }
    out.checks = vec![
        Check::at_most("pairing equals dissipation", out.pairing_defect, 1e-10),
        Check::at_least("pairing nonnegative", out.min_pairing, -1e-12),
        Check::at_most("resolvent residual", out.resolvent_residual, 1e-10),
        Check::at_least("reconstruction exact", if out.reconstruction_exact { 1.0 } else { 0.0 }, 1.0),
        Check::at_least("coercivity", out.coercivity, out.coercivity_bound - 1e-8),
    ];
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DecayOutcome {
    Fitted(DecayFit),
    Rejected { reason: String },
}

impl DecayOutcome {
    pub fn fit(&self) -> Option<&DecayFit> {
        match self {
            DecayOutcome::Fitted(f) => Some(f),
            DecayOutcome::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub e0: f64,
    pub e_final: f64,
    /// Largest violation of the dissipation identity over all grid pairs.
    pub max_identity_residual: f64,
    pub min_energy: f64,
    /// Largest increase `E(t_{n+1}) - E(t_n)`.
    pub max_increase: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub method: SpectrumMethod,
    pub modes: Vec<Mode>,
    /// `max Re μ` over the computed eigenvalues of `-A`.
    pub abscissa: f64,
    /// Energy decay rate `2|max Re μ|` implied by the abscissa.
    pub energy_rate: f64,
    /// `|1/K2 - energy_rate| / energy_rate` when a fit exists.
    pub fit_mismatch: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub identities: MultiplierReport,
    pub multiplier_bound: MultiplierBound,
    pub norm_equivalence: NormEquivalence,
    pub boundary_estimate: BoundaryEstimate,
    pub cutoff: CutoffCheck,
    /// `max |Σ boundary terms - 2E_Γ| / E(0)` over stored samples.
    pub boundary_split_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub h: f64,
    pub dim: usize,
    pub n_vertices: usize,
    pub n_cells: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub energy: EnergySummary,
    pub decay: DecayOutcome,
    pub spectrum: Option<SpectrumSummary>,
    pub poincare: Option<PoincareConstant>,
    pub assumptions: AssumptionReport,
    pub audit: Option<AuditSummary>,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub struct ScenarioOutcome {
    pub problem: Problem,
    pub trace: EnergyTrace,
    pub summary: Summary,
}

pub fn spectrum_summary(sys: &SystemMatrices, n_modes: usize, fit: Option<&DecayFit>) -> Result<SpectrumSummary> {
    let modes = spectral_abscissa(sys, n_modes)?;
    let abscissa = modes.first().map_or(f64::NAN, |m| m.re);
    let energy_rate = 2.0 * abscissa.abs();
    Ok(SpectrumSummary {
        method: spectrum_method(sys),
        fit_mismatch: fit.map(|f| (1.0 / f.k2 - energy_rate).abs() / energy_rate),
        modes,
        abscissa,
        energy_rate,
    })
}

/// Builds, integrates and analyzes one configuration. Failing checks are
/// reported in the summary, not raised.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let problem = Problem::build(config)?;
    let traj = problem.simulate()?;
    let trace = EnergyTrace::from_trajectory(&traj);
    let totals = trace.totals();
    let e0 = totals[0];
    let energy = EnergySummary {
        e0,
        e_final: *totals.last().expect("nonempty trace"),
        max_identity_residual: trace.max_pair_residual(),
        min_energy: totals.iter().copied().fold(f64::INFINITY, f64::min),
        max_increase: totals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max),
    };
    let decay = match fit_decay(&trace) {
        Ok(f) => DecayOutcome::Fitted(f),
        Err(r) => DecayOutcome::Rejected { reason: r.reason },
    };
    let a = &config.analysis;
    let spectrum = if a.spectrum {
        Some(spectrum_summary(&problem.sys, a.n_modes, decay.fit())?)
    } else {
        None
    };
    let poincare = if a.poincare { Some(poincare_constant(&problem.sys)?) } else { None };
    let mut checks = vec![
        Check::at_most("energy identity", energy.max_identity_residual, 1e-8 * e0),
        Check::at_least("energy nonnegative", energy.min_energy, -1e-12 * e0),
        Check::at_most("energy nonincreasing", energy.max_increase.max(0.0), 1e-10 * e0),
    ];
    let audit = if a.audit {
        let ctx = problem.audit_context()?;
        let identities = multiplier_residuals(&traj, &ctx)?;
        let cutoff = cutoff_check(&problem.mesh, &problem.region);
        let split = boundary_energy_report(&traj, &problem.sys);
        let boundary_split_defect = traj
            .states
            .iter()
            .enumerate()
            .map(|(k, (n, _))| (split.sum(k) - 2.0 * traj.e_gamma[*n]).abs())
            .fold(0.0, f64::max)
            / e0.max(f64::MIN_POSITIVE);
        checks.push(Check::at_most(
            "scalar identity (psi = 1) closes",
            identities.scalar.relative_residual(),
            1e-9,
        ));
        checks.push(Check::at_least("cutoff invariants", if cutoff.holds() { 1.0 } else { 0.0 }, 1.0));
        checks.push(Check::at_most("boundary energy split", boundary_split_defect, 1e-12));
        Some(AuditSummary {
            multiplier_bound: multiplier_bound(&traj, &ctx, 50)?,
            norm_equivalence: norm_equivalence(&traj, &ctx)?,
            boundary_estimate: boundary_estimate(&traj, &problem.sys, a.tau)?,
            identities,
            cutoff,
            boundary_split_defect,
        })
    } else {
        None
    };
    let summary = Summary {
        h: problem.mesh.h,
        dim: problem.mesh.dim,
        n_vertices: problem.mesh.vertices.len(),
        n_cells: problem.mesh.cells.len(),
        n_u: problem.sys.n_u(),
        n_z: problem.sys.n_z(),
        dt: config.time.dt,
        t_end: config.time.t_end,
        energy,
        decay,
        spectrum,
        poincare,
        assumptions: problem.assumptions(),
        audit,
        checks,
    };
    Ok(ScenarioOutcome { problem, trace, summary })
}

/// Writes `mesh.txt`, `energy.csv` and `summary.json` into `dir`.
pub fn write_outputs(outcome: &ScenarioOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    outcome.problem.mesh.write(&dir.join("mesh.txt"))?;
    outcome.trace.write_csv_file(&dir.join("energy.csv"))?;
    std::fs::write(dir.join("summary.json"), outcome.summary.to_json() + "\n")?;
    Ok(())
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub h: f64,
    pub flux_residual: f64,
    pub scalar_residual: f64,
    pub combined_residual: Option<f64>,
    pub normal_flux_residual: f64,
    pub cutoff_scalar_residual: f64,
    pub c_p: f64,
    /// `1/K2` of the decay fit, when accepted.
    pub decay_rate: Option<f64>,
    /// Names of the run checks that failed at this level.
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub levels: Vec<LevelResult>,
    /// Orders between consecutive levels, per identity.
    pub orders: Vec<Vec<ConvergenceOrder>>,
    /// Whether `C_p` grows from level to level.
    pub c_p_monotone: bool,
}

impl ConvergenceTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "h",
            "flux_residual",
            "scalar_residual",
            "combined_residual",
            "normal_flux_residual",
            "cutoff_scalar_residual",
            "c_p",
            "decay_rate",
            "flux_order",
            "scalar_order",
            "combined_order",
            "normal_flux_order",
            "cutoff_scalar_order",
        ])?;
        let fmt = |x: f64| format!("{x:.10e}");
        let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
        for (k, l) in self.levels.iter().enumerate() {
            let order = |name: &str| {
                if k == 0 {
                    return String::new();
                }
                self.orders[k - 1]
                    .iter()
                    .find(|o| o.identity == name)
                    .map(|o| if o.at_round_off { "round-off".to_string() } else { format!("{:.4}", o.order) })
                    .unwrap_or_default()
            };
            w.write_record([
                fmt(l.h),
                fmt(l.flux_residual),
                fmt(l.scalar_residual),
                opt(l.combined_residual),
                fmt(l.normal_flux_residual),
                fmt(l.cutoff_scalar_residual),
                fmt(l.c_p),
                opt(l.decay_rate),
                order("flux(q = x - x0)"),
                order("scalar(psi = 1)"),
                order("combined"),
                order("flux(q = k)"),
                order("scalar(psi = xi_eps)"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the configuration at `h, h/2, …` (`levels` meshes) with audits and
/// the trace constant enabled.
pub fn convergence_study(config: &ScenarioConfig, levels: usize) -> Result<ConvergenceTable> {
    if levels < 2 {
        return Err(Error::Parameter(format!("a convergence study needs at least 2 levels, got {levels}")));
    }
    let mut reports: Vec<MultiplierReport> = Vec::new();
    let mut rows = Vec::new();
    for k in 0..levels {
        let mut c = config.with_h(config.geometry.h / (1u64 << k) as f64);
        c.analysis.audit = true;
        c.analysis.poincare = true;
        c.time.store_stride = Some(1);
        let out = run_scenario(&c).map_err(|e| e.context(&format!("level {k} (h = {})", c.geometry.h)))?;
        let s = out.summary;
        let failed_checks = s.failed_checks().iter().map(|c| c.name.clone()).collect();
        let audit = s.audit.expect("audit enabled");
        let id = &audit.identities;
        rows.push(LevelResult {
            h: s.h,
            flux_residual: id.flux.residual,
            scalar_residual: id.scalar.residual,
            combined_residual: id.combined.as_ref().map(|r| r.residual),
            normal_flux_residual: id.normal_flux.residual,
            cutoff_scalar_residual: id.cutoff_scalar.residual,
            c_p: s.poincare.expect("poincare enabled").c_p,
            decay_rate: s.decay.fit().map(|f| 1.0 / f.k2),
            failed_checks,
        });
        reports.push(audit.identities);
    }
    let orders = reports
        .windows(2)
        .map(|p| {
            p[0].all()
                .into_iter()
                .zip(p[1].all())
                .map(|(a, b)| convergence_order(a, b))
                .collect()
        })
        .collect();
    let c_p_monotone = rows.windows(2).all(|p| p[1].c_p >= p[0].c_p);
    Ok(ConvergenceTable {
        levels: rows,
        orders,
        c_p_monotone,
    })
}
