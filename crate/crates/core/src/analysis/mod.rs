//! Energy bookkeeping, decay fits, the trace constant and the multiplier
//! identity audits.

mod decay;
mod energy;
mod multiplier;
mod poincare;

pub use decay::{fit_decay, DecayFit, FitRejected, MIN_CORRELATION};
pub use energy::{
    boundary_energy_report, boundary_energy_terms, boundary_estimate, decay_identity_residual, energy,
    BoundaryEnergyReport, BoundaryEstimate, EnergyTrace,
};
pub use multiplier::{
    combine_reports, convergence_order, cutoff_check, identity_reports, multiplier_bound, multiplier_residuals,
    norm_equivalence, p1_triple, AuditContext, ConvergenceOrder, CutoffCheck, IdentityAccumulator, IdentityReport,
    Multiplier, MultiplierBound, MultiplierReport, NormEquivalence, Term, ROUND_OFF_FLOOR,
};
pub use poincare::{poincare_constant, trace_ratio, PoincareConstant};
