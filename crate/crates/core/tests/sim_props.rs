use passquant::linalg::{norm2, Matrix};
use passquant::models::{example1_controller, example5_plant};
use passquant::sim::{shadow_gap, simulate, trajectory_csv, DisturbanceSource, LoopConfig, LoopMode, Reference};
use passquant::systems::{quantize, LtiModel};
use proptest::prelude::*;

fn base(mode: LoopMode, r1: Reference, r2: Reference) -> LoopConfig {
    LoopConfig {
        plant: example5_plant().into(),
        controller: example1_controller().into(),
        mode,
        tau: 0.3,
        mu1: 0.01,
        mu2: 0.01,
        r1,
        r2,
        horizon: 60,
        x1_0: vec![-0.7, -2.0],
        x2_0: vec![1.5, -1.6],
        x2s_0: None,
        storage: None,
        bisim_bound: None,
    }
}

/// `a + b = r` up to the rounding of one addition.
fn sums_to(a: f64, b: f64, r: f64) -> bool {
    (a + b - r).abs() <= 2.0 * f64::EPSILON * a.abs().max(b.abs()).max(r.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn signal_algebra_with_references(r1 in prop::collection::vec(-1.0..1.0f64, 2), r2 in prop::collection::vec(-1.0..1.0f64, 2)) {
        let cfg = base(LoopMode::SampledQuantized, Reference::Constant(r1.clone()), Reference::Constant(r2.clone()));
        let t = simulate(&cfg).unwrap();
        for k in 0..cfg.horizon {
            for i in 0..2 {
                prop_assert!(sums_to(t.y2_tilde[k][i], t.u1[k][i], r1[i]));
                prop_assert!(sums_to(t.u2_tilde[k][i], -t.y1[k][i], r2[i]));
            }
            prop_assert_eq!(&quantize(&t.u2[k], 0.01).unwrap(), &t.u2[k]);
            prop_assert_eq!(&quantize(&t.y2_tilde[k], 0.01).unwrap(), &t.y2_tilde[k]);
        }
    }

    #[test]
    fn random_disturbance_respects_bound(seed in any::<u64>()) {
        let mode = LoopMode::DisturbanceInjected { epsilon: 0.25, lipschitz: 0.5, source: DisturbanceSource::Random { seed } };
        let cfg = base(mode, Reference::Zero, Reference::Zero);
        let bound = cfg.disturbance_bound().unwrap();
        let t = simulate(&cfg).unwrap();
        prop_assert!(t.w.iter().all(|w| norm2(w) <= bound));
        prop_assert!(t.w.iter().any(|w| norm2(w) > 0.0));
    }
}

#[test]
fn shadow_disturbance_within_bound() {
    for eta in [0.1, 0.05, 0.01] {
        let mode = LoopMode::DisturbanceInjected { epsilon: 0.25, lipschitz: 0.5, source: DisturbanceSource::ShadowSymbolic { eta } };
        let mut cfg = base(mode, Reference::Zero, Reference::Zero);
        cfg.horizon = 300;
        let t = simulate(&cfg).unwrap();
        assert!(shadow_gap(&t) <= 0.25);
        let bound = cfg.disturbance_bound().unwrap();
        assert!(t.w.iter().all(|w| norm2(w) <= bound), "eta {eta}");
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let mode = LoopMode::DisturbanceInjected { epsilon: 0.25, lipschitz: 0.5, source: DisturbanceSource::Random { seed: 9 } };
    let cfg = base(mode, Reference::Constant(vec![0.1, -0.2]), Reference::Zero);
    assert_eq!(trajectory_csv(&simulate(&cfg).unwrap()), trajectory_csv(&simulate(&cfg).unwrap()));
}

#[test]
fn lti_plant_refinement() {
    let plant = LtiModel::new(
        Matrix::from_rows(&[&[-1.0, 0.5], &[-0.5, -1.0]]),
        Matrix::identity(2).scale(0.5),
        Matrix::identity(2),
        Matrix::zeros(2, 2),
    )
    .unwrap();
    let mut a = base(LoopMode::SampledQuantized, Reference::Constant(vec![0.3, 0.1]), Reference::Zero);
    a.plant = plant.into();
    a.horizon = 50;
    let mut b = a.clone();
    b.mode = LoopMode::Symbolic { eta: 1e-9, epsilon: 0.25 };
    let (ta, tb) = (simulate(&a).unwrap(), simulate(&b).unwrap());
    for k in 0..=50 {
        for (p, q) in ta.stacked_state(k).iter().zip(&tb.stacked_state(k)) {
            assert!((p - q).abs() <= 1e-6);
        }
    }
}
