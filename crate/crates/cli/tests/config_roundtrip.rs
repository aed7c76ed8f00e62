use proptest::prelude::*;

use raddiff::data::{Perturbation, ThetaPreset};
use raddiff::kinetic::TransportScheme;
use raddiff::VelocityField;
use raddiff_cli::config::{parse_config, DtPolicy, RunConfig};

fn velocity() -> impl Strategy<Value = VelocityField> {
    prop_oneof![
        Just(VelocityField::Zero),
        prop::array::uniform3(-2.0f64..2.0).prop_map(|a| VelocityField::Constant { a }),
        (-2.0f64..2.0).prop_map(|amplitude| VelocityField::TaylorGreen { amplitude }),
        (-2.0f64..2.0).prop_map(|amplitude| VelocityField::CompressibleSine { amplitude }),
    ]
}

fn theta() -> impl Strategy<Value = ThetaPreset> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|a| ThetaPreset::Constant { a }),
        (0.5f64..3.0, 0.0f64..0.4).prop_map(|(a, b)| ThetaPreset::Sine { a, b }),
    ]
}

fn decreasing(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.99, 1..n).prop_map(|mut v| {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v.dedup();
        v
    })
}

prop_compose! {
    fn config()(
        nx in 1usize..512,
        slab in any::<bool>(),
        ny in 1usize..16,
        np in 1usize..8,
        na in 2usize..16,
        epsilon in 0.001f64..0.999,
        velocity in velocity(),
        split in any::<bool>(),
        theta in theta(),
        eta in 0.0f64..0.2,
        directional in any::<bool>(),
        fixed in any::<bool>(),
        cfl in 0.01f64..1.0,
        dt in 1e-6f64..1e-2,
        t_end in 0.01f64..1.0,
        snaps in prop::collection::vec(0.0f64..1.0, 0..4),
        epsilons in decreasing(6),
        residual_epsilons in decreasing(4),
        t_eval in prop::collection::vec(0.01f64..0.5, 1..4),
        refine in any::<bool>(),
        seed in any::<u64>(),
    ) -> RunConfig {
        let mut c = RunConfig::default();
        c.grid.nx = nx;
        c.grid.slab = slab;
        c.grid.ny = if slab { 1 } else { ny };
        c.quadrature.n_polar = 2 * np;
        c.quadrature.n_azimuth = 2 * na;
        c.model.epsilon = epsilon;
        c.model.velocity = velocity;
        c.model.transport = if split { TransportScheme::SplitUpwind } else { TransportScheme::Upwind };
        c.data.theta = theta;
        c.data.eta = eta;
        c.data.perturbation = if directional { Perturbation::Directional } else { Perturbation::Isotropic };
        c.run.dt_policy = if fixed { DtPolicy::Fixed } else { DtPolicy::Cfl };
        c.run.cfl = cfl;
        c.run.dt = dt;
        c.run.t_end = t_end;
        let mut s: Vec<f64> = snaps.into_iter().map(|x| x * t_end).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s.dedup();
        c.run.snapshot_times = s;
        c.run.seed = seed;
        c.sweep.epsilons = epsilons;
        c.sweep.residual_epsilons = residual_epsilons;
        c.sweep.t_eval = t_eval;
        c.sweep.refinement_check = refine;
        c
    }
}

proptest! {
    #[test]
    fn echo_round_trips(cfg in config()) {
        let text = cfg.echo();
        let parsed = parse_config(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&parsed, &cfg);
        let again = parse_config(&parsed.echo()).unwrap();
        prop_assert_eq!(again, parsed);
    }

    #[test]
    fn epsilon_outside_unit_interval_is_rejected(e in prop_oneof![-5.0f64..=0.0, 1.0f64..5.0]) {
        let err = parse_config(&format!("[model]\nepsilon = {e:?}\n")).unwrap_err();
        prop_assert!(err.to_string().contains("(0, 1)"));
    }
}
