//! Solver output against independent reference computations written here.

use std::f64::consts::PI;

use raddiff::field::{DirectionalField, ScalarField};
use raddiff::grid::PeriodicGrid;
use raddiff::kinetic::{KineticParams, KineticSolver};
use raddiff::layers::{compatible_theta00, zeroth_layer, LayerOptions};
use raddiff::limit::{limit_step, LimitParams, LimitState};
use raddiff::norms::norm_l2;
use raddiff::quadrature::AngularQuadrature;
use raddiff::VelocityField;

/// Classical RK4 on the homogeneous pair
/// `eps^2 f' = theta^4 - f`, `eps^2 theta' = f - theta^4`.
fn homogeneous_rk4(eps: f64, f0: f64, th0: f64, t_end: f64, n: usize) -> (f64, f64) {
    let e2 = eps * eps;
    let rhs = |f: f64, th: f64| {
        let s = (th.powi(4) - f) / e2;
        (s, -s)
    };
    let dt = t_end / n as f64;
    let (mut f, mut th) = (f0, th0);
    for _ in 0..n {
        let k1 = rhs(f, th);
        let k2 = rhs(f + 0.5 * dt * k1.0, th + 0.5 * dt * k1.1);
        let k3 = rhs(f + 0.5 * dt * k2.0, th + 0.5 * dt * k2.1);
        let k4 = rhs(f + dt * k3.0, th + dt * k3.1);
        f += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        th += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (f, th)
}

#[test]
fn rk4_reference_is_converged() {
    let a = homogeneous_rk4(0.5, 1.3, 0.9, 0.5, 20_000);
    let b = homogeneous_rk4(0.5, 1.3, 0.9, 0.5, 40_000);
    assert!((a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13);
    // f + theta is invariant.
    assert!((a.0 + a.1 - 2.2).abs() < 1e-13);
}

#[test]
fn homogeneous_kinetic_run_is_first_order_in_time() {
    let grid = PeriodicGrid::new([1, 1, 1], [1.0; 3]).unwrap();
    let quad = AngularQuadrature::product(2, 4).unwrap();
    let eps = 0.5;
    let (f0, th0) = (1.3, 0.9);
    let (f_ref, th_ref) = homogeneous_rk4(eps, f0, th0, 0.5, 20_000);
    let h = DirectionalField::constant(quad.len(), 1, f0);
    let theta = ScalarField::constant(1, th0);
    let mut errs = Vec::new();
    for dt in [1e-3, 5e-4] {
        let params = KineticParams::new(eps, &grid, &quad).unwrap().with_dt(dt);
        let solver = KineticSolver::new(&grid, &quad, params, VelocityField::Zero).unwrap();
        let run = solver.run(&h, &theta, 0.5, &[], |_| {}).unwrap();
        let s = run.final_state;
        errs.push((s.f.get(0, 0) - f_ref).abs().max((s.theta[0] - th_ref).abs()));
    }
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 1.0).abs() < 0.05, "observed order {order}, errors {errs:?}");
}

#[test]
fn linearized_limit_decay_matches_discrete_symbol() {
    // theta0 = 1 + d sin(2 pi x) with d tiny: the limit equation reduces to
    // 5 theta' = (7/3) Lap theta' and backward Euler damps the mode by
    // 1 / (1 + dt k) per step with k = (7/15) (4 sin^2(pi h) / h^2).
    let n = 64;
    let grid = PeriodicGrid::slab(n).unwrap();
    let d = 1e-7;
    let theta = ScalarField::from_fn(&grid, |x: [f64; 3]| 1.0 + d * (2.0 * PI * x[0]).sin());
    let h = 1.0 / n as f64;
    let k = 7.0 / 15.0 * 4.0 * (PI * h).sin().powi(2) / (h * h);
    let dt = 2e-3;
    let steps = 25;
    let mut state = LimitState { theta0: theta, t: 0.0 };
    for _ in 0..steps {
        state = limit_step(&grid, &state, dt, &VelocityField::Zero, &LimitParams::default()).unwrap();
    }
    let expected = (1.0 + dt * k).powi(-steps);
    let amp = state.theta0.iter().map(|v| v - 1.0).collect::<Vec<_>>();
    let measured = norm_l2(&grid, &amp) / (d / 2f64.sqrt());
    assert!(
        (measured / expected - 1.0).abs() < 1e-5,
        "measured {measured}, expected {expected}"
    );
}

#[test]
fn zeroth_layer_decays_at_linearized_rate() {
    // Constant theta00 = c and a small isotropic offset: thetaI0 solves
    // thetaI' = -(1 + 4 c^3) thetaI up to O(amplitude^2).
    for &c in &[0.8f64, 1.0, 1.5] {
        let quad = AngularQuadrature::product(4, 8).unwrap();
        let amp = 1e-6;
        let theta = ScalarField::constant(2, c + amp);
        let h = DirectionalField::constant(quad.len(), 2, c.powi(4) - amp);
        let (theta00, _) = compatible_theta00(&quad, &h, &theta).unwrap();
        let opts = LayerOptions::default();
        let layer = zeroth_layer(&quad, &h, &theta, &theta00, &opts).unwrap();
        let rate = 1.0 + 4.0 * theta00[0].powi(3);
        let init = theta[0] - theta00[0];
        for tau in [0.1, 0.5, 1.0, 2.0] {
            let got = layer.theta_at(tau).unwrap()[0];
            let want = init * (-rate * tau).exp();
            assert!(
                (got - want).abs() <= 1e-5 * init.abs(),
                "c = {c}, tau = {tau}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn sine_l2_norm_on_uniform_grid() {
    let grid = PeriodicGrid::slab(64).unwrap();
    let s = ScalarField::from_fn(&grid, |x: [f64; 3]| (2.0 * PI * x[0]).sin());
    assert!((norm_l2(&grid, &s) - 0.5f64.sqrt()).abs() < 1e-3);
}
