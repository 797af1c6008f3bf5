use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elastowave::analysis::{
    boundary_energy_report, boundary_estimate, combine_reports, convergence_order, cutoff_check,
    decay_identity_residual, fit_decay, identity_reports, multiplier_residuals, p1_triple, poincare_constant,
    trace_ratio, EnergyTrace, ROUND_OFF_FLOOR,
};
use elastowave::linalg::to_dense;
use elastowave::scenario::{InitialKind, Problem, ScenarioConfig};
use elastowave::tangential::p1_mass;
use elastowave::Error;

fn short_run(h: f64, t_end: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::reference().with_h(h);
    c.time.t_end = t_end;
    c.geometry.x0 = vec![0.2, 0.1];
    c.initial = InitialKind::Bump;
    c.analysis.audit = true;
    c
}

#[test]
fn trace_constant_matches_a_dense_generalized_eigensolve() {
    let p = Problem::build(&ScenarioConfig::reference()).unwrap();
    let pc = poincare_constant(&p.sys).unwrap();
    // T x = θ K x  ⇔  L⁻¹ T L⁻ᵀ y = θ y with K = L Lᵀ
    let k = to_dense(&p.sys.bulk.stiffness);
    let l = k.cholesky().unwrap().l();
    let linv = l.try_inverse().unwrap();
    let c = &linv * to_dense(&p.sys.trace_mass) * linv.transpose();
    let theta = SymmetricEigen::new(c).eigenvalues.max();
    assert!((pc.theta - theta).abs() <= 1e-8 * theta, "{} vs {theta}", pc.theta);
    assert!((pc.c_p * pc.c_p - pc.theta).abs() <= 1e-15 * pc.theta);
    assert!((trace_ratio(&p.sys, &pc.eigenvector) - pc.theta).abs() <= 1e-12 * pc.theta);
}

#[test]
fn trace_inequality_holds_for_random_fields() {
    let p = Problem::build(&ScenarioConfig::reference()).unwrap();
    let pc = poincare_constant(&p.sys).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let u: Vec<f64> = (0..p.sys.n_u()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        assert!(trace_ratio(&p.sys, &u) <= pc.theta * (1.0 + 1e-12));
    }
}

#[test]
fn p1_triple_matches_the_monomial_formula() {
    // ∫ λ_0^a λ_1^b λ_2^c = k! a! b! c! / (k + a + b + c)! · |K|
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    for k in 1..=3 {
        for i in 0..=k {
            for j in 0..=k {
                for l in 0..=k {
                    let mut pow = vec![0usize; k + 1];
                    pow[i] += 1;
                    pow[j] += 1;
                    pow[l] += 1;
                    let expect = fact(k) * pow.iter().map(|&p| fact(p)).product::<f64>() / fact(k + 3) * 2.5;
                    assert!((p1_triple(2.5, k, i, j, l) - expect).abs() < 1e-15);
                }
                let mut pow = vec![0usize; k + 1];
                pow[i] += 1;
                pow[j] += 1;
                let expect = fact(k) * pow.iter().map(|&p| fact(p)).product::<f64>() / fact(k + 2) * 2.5;
                assert!((p1_mass(2.5, k, i, j) - expect).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn identity_reports_close_their_bookkeeping() {
    let c = short_run(0.25, 0.5);
    let p = Problem::build(&c).unwrap();
    let traj = p.simulate().unwrap();
    let ctx = p.audit_context().unwrap();
    let r = multiplier_residuals(&traj, &ctx).unwrap();
    for rep in r.all() {
        let sum: f64 = rep.terms.iter().map(|t| t.value).sum();
        assert_eq!(rep.residual, sum, "{}", rep.identity);
        assert!(rep.scale >= rep.residual.abs());
    }
    assert!(r.scalar.relative_residual() < ROUND_OFF_FLOOR, "{}", r.scalar.relative_residual());
    assert_eq!(r.normal.as_ref().unwrap().term("christoffel"), Some(0.0));
    let combined = r.combined.as_ref().unwrap();
    let expect = r.flux.residual - 0.5 * r.scalar.residual + r.tangential.as_ref().unwrap().residual
        + r.normal.as_ref().unwrap().residual;
    assert!((combined.residual - expect).abs() <= 1e-12 * combined.scale);
}

#[test]
fn combine_reports_prefixes_and_weights_terms() {
    let c = short_run(0.25, 0.1);
    let p = Problem::build(&c).unwrap();
    let traj = p.simulate().unwrap();
    let ctx = p.audit_context().unwrap();
    let reps = identity_reports(&traj, &ctx, vec![ctx.constant_scalar(2.0)]).unwrap();
    let c = combine_reports("twice", &[(2.0, &reps[0])]);
    assert_eq!(c.terms.len(), reps[0].terms.len());
    assert_eq!(c.terms[0].name, format!("{}:{}", reps[0].identity, reps[0].terms[0].name));
    assert_eq!(c.terms[0].value, 2.0 * reps[0].terms[0].value);
}

#[test]
fn audits_require_full_trajectories() {
    let mut c = short_run(0.25, 0.1);
    c.analysis.audit = false;
    c.time.store_stride = Some(5);
    let p = Problem::build(&c).unwrap();
    let traj = p.simulate().unwrap();
    let ctx = p.audit_context().unwrap();
    assert!(matches!(multiplier_residuals(&traj, &ctx), Err(Error::State(_))));
}

#[test]
fn convergence_order_reports_round_off_identities() {
    let coarse_c = short_run(0.25, 0.3);
    let fine_c = short_run(0.125, 0.3);
    let reps: Vec<_> = [coarse_c, fine_c]
        .iter()
        .map(|c| {
            let p = Problem::build(c).unwrap();
            let traj = p.simulate().unwrap();
            multiplier_residuals(&traj, &p.audit_context().unwrap()).unwrap()
        })
        .collect();
    let o = convergence_order(&reps[0].scalar, &reps[1].scalar);
    assert!(o.at_round_off);
    assert!(o.passes(1.0));
}

#[test]
fn cutoff_invariants_hold_on_the_reference_mesh() {
    let p = Problem::build(&ScenarioConfig::reference()).unwrap();
    let c = cutoff_check(&p.mesh, &p.region);
    assert!(c.holds(), "{c:?}");
}

#[test]
fn reference_decay_fit_and_energy_identity() {
    let p = Problem::build(&ScenarioConfig::reference()).unwrap();
    let traj = p.simulate().unwrap();
    let trace = EnergyTrace::from_trajectory(&traj);
    let fit = fit_decay(&trace).unwrap();
    assert!(fit.goodness >= 0.99);
    assert!(fit.k2.is_finite() && fit.k2 > 0.0);
    assert!(fit.k1 >= 1.0);
    let e0 = trace.total(0);
    for k in 0..trace.len() {
        if trace.t[k] >= fit.window[0] {
            assert!(trace.total(k) <= fit.k1 * (-trace.t[k] / fit.k2).exp() * e0 * (1.0 + 1e-12));
        }
    }
    let e = trace.totals();
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(trace.max_pair_residual() <= 1e-8 * e0);
    assert!(decay_identity_residual(&trace, 1.0, 39.0).unwrap().abs() <= 1e-8 * e0);
    assert!(matches!(decay_identity_residual(&trace, 2.0, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(decay_identity_residual(&trace, 1.005, 2.0), Err(Error::Parameter(_))));
}

#[test]
fn energy_csv_has_the_documented_columns() {
    let mut c = ScenarioConfig::reference();
    c.time.t_end = 0.05;
    let p = Problem::build(&c).unwrap();
    let trace = EnergyTrace::from_trajectory(&p.simulate().unwrap());
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,E_total,E_omega,E_gamma,diss_a_cum,diss_g_cum,identity_residual");
    assert_eq!(lines.count(), 6);
}

#[test]
fn boundary_energy_split_and_estimate() {
    let mut c = ScenarioConfig::reference();
    c.time.t_end = 2.0;
    c.time.store_stride = Some(1);
    let p = Problem::build(&c).unwrap();
    let traj = p.simulate().unwrap();
    let rep = boundary_energy_report(&traj, &p.sys);
    let e0 = traj.energy(0);
    for k in 0..rep.t.len() {
        let n = (rep.t[k] / traj.dt).round() as usize;
        assert!((rep.sum(k) - 2.0 * traj.e_gamma[n]).abs() <= 1e-12 * e0);
    }
    let est = boundary_estimate(&traj, &p.sys, 0.5).unwrap();
    assert!(est.lhs >= 0.0 && est.implied_constant.is_finite());
    assert!(matches!(boundary_estimate(&traj, &p.sys, 0.0), Err(Error::Parameter(_))));
}
