//! Property tests for the structural invariants of the solvers.

use std::sync::Arc;

use proptest::prelude::*;

use raddiff::field::{DirectionalField, ScalarField};
use raddiff::grid::PeriodicGrid;
use raddiff::harness::fit_rate;
use raddiff::kinetic::{relaxation_solve, KineticParams, KineticSolver, KineticState, TransportScheme};
use raddiff::layers::{compatible_theta00, g_inverse, zeroth_layer, LayerOptions};
use raddiff::limit::{limit_step, LimitParams, LimitState};
use raddiff::norms::{norm_h2, norm_l2};
use raddiff::ops::{advect_div, div_faces, face_grad, grad, laplacian, upwind_transport};
use raddiff::oracle::{default_samples, solve_fixed_point, TransportProblem};
use raddiff::quadrature::AngularQuadrature;
use raddiff::VelocityField;

fn small_grid() -> PeriodicGrid<f64> {
    PeriodicGrid::new([5, 4, 3], [1.0, 0.7, 1.3]).unwrap()
}

fn cell_values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_moments_hold(np in 1usize..9, na in 2usize..17) {
        let q = AngularQuadrature::<f64>::product(2 * np, 2 * na).unwrap();
        let r = q.moment_residuals();
        prop_assert!(r.weight_sum <= 1e-13);
        prop_assert!(r.first_moment <= 1e-13);
        prop_assert!(r.second_moment <= 1e-10);
        prop_assert!(r.max_unit_norm <= 1e-13);
    }

    #[test]
    fn odd_moments_average_to_zero(a in prop::array::uniform3(-3.0f64..3.0), g in cell_values(60, -2.0, 2.0)) {
        let q = AngularQuadrature::<f64>::product(4, 8).unwrap();
        let grid = small_grid();
        let f = DirectionalField::from_dirs(q.len(), grid.n_cells(), |m, out| {
            let w = q.dir(m);
            let wa = w[0] * a[0] + w[1] * a[1] + w[2] * a[2];
            for (o, gc) in out.iter_mut().zip(&g) {
                *o = wa * gc;
            }
        });
        let mean = q.angular_average(&f);
        prop_assert!(mean.iter().all(|v| v.abs() <= 1e-13 * (1.0 + a.iter().map(|x| x.abs()).sum::<f64>())));
    }

    #[test]
    fn difference_operators(s in cell_values(60, -1.0, 1.0), c in -5.0f64..5.0) {
        let grid = small_grid();
        let constant = vec![c; 60];
        prop_assert!(laplacian(&grid, &constant).iter().all(|&v| v == 0.0));
        prop_assert!(grad(&grid, &constant).iter().all(|g| g.iter().all(|&v| v == 0.0)));
        let lap = laplacian(&grid, &s);
        let dg = div_faces(&grid, &face_grad(&grid, &s));
        let scale = lap.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in lap.iter().zip(dg.iter()) {
            prop_assert!((a - b).abs() <= 1e-13 * scale);
        }
        let h2 = norm_h2(&grid, &ScalarField::from_vec(s.clone()));
        prop_assert!(h2 >= norm_l2(&grid, &s));
    }

    #[test]
    fn conservative_operators_have_zero_sum(s in cell_values(60, 0.1, 2.0), amp in -2.0f64..2.0) {
        let grid = small_grid();
        for u in [VelocityField::CompressibleSine { amplitude: amp }, VelocityField::TaylorGreen { amplitude: amp }] {
            let faces = u.face_normals(&grid, 0.0);
            let d = advect_div(&grid, &faces, &s);
            let scale: f64 = d.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(d.sum().abs() <= 1e-12 * scale);
        }
        let q = AngularQuadrature::<f64>::product(2, 4).unwrap();
        let f = DirectionalField::from_dirs(q.len(), 60, |m, out| {
            for (c, o) in out.iter_mut().enumerate() {
                *o = s[(c + 7 * m) % 60];
            }
        });
        let t = upwind_transport(&grid, &q, &f, 3.0);
        for m in 0..q.len() {
            let dir = t.dir(m);
            let scale: f64 = dir.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(dir.iter().sum::<f64>().abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn relaxation_conserves_and_stays_positive(
        fbar in 0.0f64..50.0,
        theta in 1e-3f64..5.0,
        eps in 1e-3f64..0.999,
        dt in 1e-6f64..1.0,
    ) {
        let (fb, th) = relaxation_solve(fbar, theta, eps, dt, 1e-15, 100).unwrap();
        prop_assert!(th > 0.0 && fb >= 0.0);
        prop_assert!(((fb + th) - (fbar + theta)).abs() <= 1e-13 * (fbar + theta).max(1.0));
        let r = dt / (eps * eps);
        prop_assert!(((fb - fbar) + r * (fb - th.powi(4))).abs() <= 1e-9 * (1.0 + r) * (fbar + theta).max(1.0));
    }

    #[test]
    fn compatibility_root(l0 in 0.01f64..100.0) {
        let th = g_inverse(l0).unwrap();
        prop_assert!(th > 0.0);
        prop_assert!((th.powi(4) + th - l0).abs() <= 1e-12);
    }

    #[test]
    fn fit_recovers_exact_power_laws(c in 0.01f64..100.0, p in 0.2f64..3.0) {
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05].iter().map(|&e| (e, c * f64::powf(e, p))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() <= 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() <= 1e-9);
        prop_assert!(fit.max_residual <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kinetic_steps_keep_positivity_and_energy(
        theta in cell_values(12, 0.5, 2.0),
        h in cell_values(12 * 8, 0.0, 6.0),
        eps in 0.05f64..0.9,
        amp in -1.0f64..1.0,
    ) {
        let grid = PeriodicGrid::new([12, 1, 1], [1.0, 1.0, 1.0]).unwrap();
        let quad = AngularQuadrature::product(2, 4).unwrap();
        let u = VelocityField::CompressibleSine { amplitude: amp };
        // Plain upwind is the monotone scheme; the split variant trades
        // monotonicity for accuracy near the diffusion limit.
        let params = KineticParams::new(eps, &grid, &quad).unwrap().with_transport(TransportScheme::Upwind);
        let solver = KineticSolver::new(&grid, &quad, params, u).unwrap();
        let mut state = KineticState {
            f: DirectionalField::from_vec(8, 12, h).unwrap(),
            theta: ScalarField::from_vec(theta),
            t: 0.0,
        };
        let e0 = solver.diagnostics(&state).energy;
        for _ in 0..5 {
            state = solver.step(&state).unwrap();
            prop_assert!(state.f.min() >= 0.0);
            prop_assert!(state.theta.min() > 0.0);
        }
        let e1 = solver.diagnostics(&state).energy;
        prop_assert!((e1 - e0).abs() <= 1e-11 * e0);
    }

    #[test]
    fn limit_steps_conserve_mass(theta in cell_values(16, 0.5, 2.0), amp in -1.0f64..1.0) {
        let grid = PeriodicGrid::slab(16).unwrap();
        let u = VelocityField::CompressibleSine { amplitude: amp };
        let mut state = LimitState { theta0: ScalarField::from_vec(theta), t: 0.0 };
        let m0 = state.mass(&grid);
        for _ in 0..3 {
            state = limit_step(&grid, &state, 1e-3, &u, &LimitParams::default()).unwrap();
            prop_assert!(state.theta0.min() > 0.0);
        }
        prop_assert!((state.mass(&grid) - m0).abs() <= 1e-10 * m0);
    }

    #[test]
    fn zeroth_layer_keeps_mean_plus_temperature_at_zero(
        theta in cell_values(8, 0.5, 1.5),
        h in cell_values(8 * 8, 0.0, 3.0),
    ) {
        let quad = AngularQuadrature::product(2, 4).unwrap();
        let h = DirectionalField::from_vec(8, 8, h).unwrap();
        let theta = ScalarField::from_vec(theta);
        let opts = LayerOptions { tau_max: 10.0, dtau: 1e-2, stride: 1 };
        let (theta00, _) = compatible_theta00(&quad, &h, &theta).unwrap();
        let layer = zeroth_layer(&quad, &h, &theta, &theta00, &opts).unwrap();
        for &tau in &layer.taus {
            let th = layer.theta_at(tau).unwrap();
            let mean = layer.mean_at(tau).unwrap();
            for (a, b) in th.iter().zip(mean.iter()) {
                prop_assert!((a + b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn picard_iterates_are_positive_and_contract(
        eps in 0.1f64..0.9,
        ah in 0.0f64..0.9,
        af in 0.0f64..1.0,
    ) {
        let lattice = PeriodicGrid::slab(32).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let prob = TransportProblem {
            epsilon: eps,
            h: Arc::new(move |x, w| 1.0 + ah * (two_pi * x[0]).sin() * w[0].abs()),
            source: Arc::new(move |_, x, _| af * (1.0 + (two_pi * x[0]).cos())),
            t_eval: eps * eps,
            samples: default_samples(&lattice),
            quad: AngularQuadrature::product(2, 4).unwrap(),
            lattice,
            panels_per_tau: 8,
        };
        let fp = solve_fixed_point(&prob, 1e-12, 60).unwrap();
        prop_assert!(fp.values.iter().all(|&v| v >= 0.0));
        prop_assert!(fp.contraction_holds(), "max ratio {} > {}", fp.max_ratio(), fp.ratio_bound);
        prop_assert!(fp.linf() <= fp.linf_bound);
    }
}
