mod common;

use proptest::prelude::*;

use elastowave::analysis::{fit_decay, EnergyTrace};
use elastowave::evolution::{generator_pairing, integrate, State};
use elastowave::geometry::Point;
use elastowave::linalg::{max_asymmetry, Triplets};
use elastowave::scenario::{Problem, ScenarioConfig};
use elastowave::tangential::{decompose_trace, lambda_star, reconstruct_trace};

fn problem(f: f64, g: f64, h: f64, a0: f64, lambda: f64) -> Problem {
    let mut c = ScenarioConfig::reference();
    c.boundary.f = f;
    c.boundary.g = g;
    c.boundary.h = h;
    c.damping.a0 = a0;
    c.material.lambda = lambda;
    Problem::build(&c).unwrap()
}

fn state_from(sys: &elastowave::assembly::SystemMatrices, seed: &[f64]) -> State {
    let (nu, nz) = (sys.n_u(), sys.n_z());
    let x: Vec<f64> = (0..2 * nu + 2 * nz).map(|k| seed[k % seed.len()] * ((k as f64) * 0.37).cos()).collect();
    State::from_vec(&x, nu, nz)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairing_is_dissipative(
        f in 0.1f64..5.0, g in 0.1f64..5.0, h in 0.1f64..5.0, a0 in 0.1f64..5.0, lambda in 0.1f64..5.0,
        seed in prop::collection::vec(-1.0f64..1.0, 1..16),
    ) {
        let p = problem(f, g, h, a0, lambda);
        let s = state_from(&p.sys, &seed);
        let n2 = p.sys.norm_sq(&s);
        prop_assume!(n2 > 0.0);
        let (pair, diss) = generator_pairing(&s, &p.sys).unwrap();
        prop_assert!((pair - diss).abs() <= 1e-10 * n2);
        prop_assert!(pair >= -1e-12 * n2);
    }

    #[test]
    fn energy_never_increases(
        a0 in 0.1f64..5.0, g in 0.1f64..5.0, dt in 0.005f64..0.2,
        seed in prop::collection::vec(-1.0f64..1.0, 1..16),
    ) {
        let p = problem(1.0, g, 1.0, a0, 1.0);
        let s = state_from(&p.sys, &seed);
        let traj = integrate(&s, 20.0 * dt, dt, &p.sys, 5).unwrap();
        let e0 = traj.energy(0);
        for n in 1..traj.times.len() {
            prop_assert!(traj.energy(n) <= traj.energy(n - 1) + 1e-12 * e0);
        }
    }

    #[test]
    fn trace_decomposition_round_trips(
        vals in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 8),
    ) {
        let mesh = common::annulus(0.25);
        let (frames, layout) = common::boundary_setup(&mesh);
        let ambient: Vec<Point> = (0..layout.n_nodes())
            .map(|i| { let (a, b) = vals[i % vals.len()]; Point::new(a, b, 0.0) })
            .collect();
        let z = decompose_trace(&layout, &frames, &ambient).unwrap();
        let back = reconstruct_trace(&layout, &frames, &z).unwrap();
        for (x, y) in ambient.iter().zip(&back) {
            prop_assert!((x - y).norm() <= 1e-14 * (1.0 + x.norm()));
        }
        // tangential and normal parts are orthogonal, so |x|² splits
        for i in 0..layout.n_nodes() {
            let n2 = z.z_t[i] * z.z_t[i] + z.z_nu[i] * z.z_nu[i];
            prop_assert!((n2 - ambient[i].norm_squared()).abs() <= 1e-13 * (1.0 + n2));
        }
    }

    #[test]
    fn lambda_star_lies_below_lambda_and_two_mu(lambda in 1e-3f64..1e3, mu in 1e-3f64..1e3) {
        let ls = lambda_star(lambda, mu);
        prop_assert!(ls > 0.0);
        prop_assert!(ls <= lambda * (1.0 + 1e-15));
        prop_assert!(ls <= 2.0 * mu * (1.0 + 1e-15));
    }

    #[test]
    fn symmetric_contributions_give_exactly_symmetric_matrices(
        entries in prop::collection::vec((0usize..12, 0usize..12, -10.0f64..10.0), 1..80),
    ) {
        let mut t = Triplets::new(12, 12);
        for &(r, c, v) in &entries {
            t.push(r, c, v);
            t.push(c, r, v);
        }
        prop_assert_eq!(max_asymmetry(&t.to_csr()), 0.0);
    }

    #[test]
    fn decay_fit_recovers_pure_exponentials(rate in 0.05f64..3.0, amp in 0.1f64..100.0) {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let e = t.iter().map(|&x| amp * (-rate * x).exp()).collect();
        let fit = fit_decay(&EnergyTrace::from_energy(t, e).unwrap()).unwrap();
        prop_assert!((1.0 / fit.k2 - rate).abs() <= 1e-9 * rate);
        prop_assert!((fit.prefactor - amp).abs() <= 1e-8 * amp);
        prop_assert!((fit.k1 - 1.0).abs() <= 1e-9);
    }
}
