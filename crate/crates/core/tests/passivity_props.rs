use passquant::linalg::Matrix;
use passquant::models::example1_controller;
use passquant::passivity::{
    choose_nu_hat, compose_feedback, degrade_quantization, degrade_sampling, dissipation_audit, max_index_bisection,
    symbolic_quant_bias, verify_lti_passivity, FixedIndex, IndexSet, IoTrajectory, LambdaChoices, LtiForm,
    QuadraticStorage,
};
use passquant::systems::{discretize_exact, DiscreteLti};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sampling_indices_monotone_on_grid() {
    for &rho in &[-0.5, 0.0, 0.5628, 2.0] {
        let grid: Vec<f64> = (0..20).map(|i| 0.01 + 0.05 * i as f64).collect();
        for (i, &tau) in grid.iter().enumerate() {
            for (j, &gamma) in grid.iter().enumerate() {
                let s = degrade_sampling(0.3, rho, gamma, tau, 10.0).unwrap();
                if i + 1 < grid.len() {
                    let t = degrade_sampling(0.3, rho, gamma, grid[i + 1], 10.0).unwrap();
                    assert!(t.nu <= s.nu && t.rho <= s.rho);
                }
                if j + 1 < grid.len() {
                    let g = degrade_sampling(0.3, rho, grid[j + 1], tau, 10.0).unwrap();
                    assert!(g.nu <= s.nu && g.rho <= s.rho);
                }
            }
        }
    }
}

#[test]
fn quantization_limits() {
    let l = LambdaChoices::default();
    let mut last = f64::INFINITY;
    for k in 0..12 {
        let mu = 0.1 * 0.5f64.powi(k);
        let q = degrade_quantization(0.2, 0.98, mu, mu, 2, &l).unwrap();
        assert!(q.delta < last);
        if last.is_finite() {
            assert!((q.delta - last / 4.0).abs() <= 1e-15 * last);
        }
        last = q.delta;
        assert!(q.nu < 0.2 && q.rho < 0.98);
    }
    assert!(last < 1e-6);
    let small = LambdaChoices { l3: 5.0, ..l };
    let q_small = degrade_quantization(0.2, 0.98, 0.01, 0.01, 2, &small).unwrap();
    let q_large = degrade_quantization(0.2, 0.98, 0.01, 0.01, 2, &l).unwrap();
    assert!(q_large.nu > q_small.nu && q_large.delta > q_small.delta);
}

#[test]
fn symbolic_bias_duplicate_evaluation() {
    let l = LambdaChoices::default();
    let v = symbolic_quant_bias(0.20, 0.9803, 0.5, 0.25, 0.01, 0.01, 2, &l).unwrap();
    let out = 0.5f64 * 0.25 + 3.0 * 2f64.sqrt() * 0.01;
    let expected = (0.9803 * 21.0 + 20.0) * out.powi(2) + (0.20 * 21.0 + 20.0) * 2.0 * 1e-4;
    assert!((v - expected).abs() <= 1e-14);
}

#[test]
fn compose_example_duplicate_evaluation() {
    let i1 = IndexSet::ifofp(0.2177, 0.5065);
    let i2 = IndexSet::new(0.1775, 0.9188, 0.0130, 0.0).unwrap();
    let l = compose_feedback(&i1, &i2, 0.1).unwrap();
    let a: f64 = 0.5065 - 0.1 * 0.1775 / 0.0775;
    let b = 0.9188 - 0.1 * 0.2177 / 0.1177;
    assert!((l.rho_hat - a.min(b)).abs() <= 1e-15);
    assert_eq!(l.delta_hat, 0.0130);
}

fn grid_argmax(i1: &IndexSet, i2: &IndexSet) -> f64 {
    let top = i1.nu.min(i2.nu);
    let n = 10_000;
    (0..n)
        .map(|k| top - 10.0 + 10.0 * (k as f64 + 0.5) / n as f64)
        .map(|v| (v, compose_feedback(i1, i2, v).unwrap().rho_hat))
        .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}

#[test]
fn nu_hat_agrees_with_grid() {
    for (i1, i2) in [
        (IndexSet::ifofp(1.0, 1.0), IndexSet::ifofp(1.0, 1.0)),
        (IndexSet::ifofp(0.5, 50.0), IndexSet::ifofp(0.5, 60.0)),
        (IndexSet::ifofp(0.2177, 0.5065), IndexSet::new(0.1775, 0.9188, 0.013, 0.0).unwrap()),
    ] {
        let chosen = choose_nu_hat(&i1, &i2).unwrap();
        let grid = grid_argmax(&i1, &i2);
        let r = |v| compose_feedback(&i1, &i2, v).unwrap().rho_hat;
        assert!((chosen - grid).abs() <= 1e-3, "{chosen} vs {grid}");
        assert!(r(chosen) >= r(grid) - 1e-4);
    }
}

proptest! {
    #[test]
    fn compose_reduces_to_pure_case(nu1 in -1.0..1.0f64, nu2 in -1.0..1.0f64, r1 in -1.0..2.0f64, r2 in -1.0..2.0f64,
                                    d1 in 0.0..1.0f64, d2 in 0.0..1.0f64, gap in 0.01..5.0f64) {
        let nh = nu1.min(nu2) - gap;
        let pure = compose_feedback(&IndexSet::ifofp(nu1, r1), &IndexSet::ifofp(nu2, r2), nh).unwrap();
        let biased = compose_feedback(&IndexSet::new(nu1, r1, d1, 0.0).unwrap(), &IndexSet::new(nu2, r2, d2, 0.0).unwrap(), nh).unwrap();
        prop_assert_eq!(pure.delta_hat, 0.0);
        prop_assert_eq!(pure.rho_hat, biased.rho_hat);
        prop_assert_eq!(biased.delta_hat, d1 + d2);
    }
}

fn random_io(sys: &DiscreteLti, rng: &mut ChaCha8Rng, steps: usize) -> IoTrajectory {
    let mut x: Vec<f64> = (0..sys.n()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut t = IoTrajectory { x: vec![x.clone()], ..Default::default() };
    for _ in 0..steps {
        let u: Vec<f64> = (0..sys.m()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        t.y.push(sys.output(&x, &u).unwrap());
        x = sys.step(&x, &u).unwrap();
        t.u.push(u);
        t.x.push(x.clone());
    }
    t
}

#[test]
fn lmi_pass_implies_clean_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sys = discretize_exact(&example1_controller(), 0.3).unwrap();
    let cases = [(0.20, 0.9803, 0.7667), (0.0, 0.5, 0.5), (0.1, 0.8, 1.0)];
    for (nu, rho, p) in cases {
        let storage = QuadraticStorage::scaled_identity(2, p).unwrap();
        assert!(verify_lti_passivity(LtiForm::Discrete(&sys), &storage, nu, rho).unwrap().pass);
        let idx = IndexSet::ifofp(nu, rho);
        for _ in 0..100 {
            let traj = random_io(&sys, &mut rng, 100);
            let viol = dissipation_audit(&traj, |x| storage.value(x), &idx, |_| 0.0).unwrap();
            assert!(viol <= 1e-8, "({nu}, {rho}, {p}): violation {viol}");
        }
    }
}

#[test]
fn bisected_index_audits_clean_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for _ in 0..20 {
        let a = Matrix::from_rows(&[&[rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3)], &[rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5)]]);
        let b = Matrix::identity(2).scale(rng.gen_range(0.2..1.0));
        let c = b.transpose();
        let d = Matrix::identity(2).scale(rng.gen_range(0.5..1.5));
        let sys = DiscreteLti::new(a, b, c, d, 1.0).unwrap();
        let storage = QuadraticStorage::scaled_identity(2, 1.0).unwrap();
        let Ok(rho) = max_index_bisection(LtiForm::Discrete(&sys), &storage, FixedIndex::Nu(0.0)) else { continue };
        let idx = IndexSet::ifofp(0.0, rho - 1e-5);
        for _ in 0..20 {
            let traj = random_io(&sys, &mut rng, 50);
            assert!(dissipation_audit(&traj, |x| storage.value(x), &idx, |_| 0.0).unwrap() <= 1e-8);
        }
        checked += 1;
    }
    assert!(checked >= 5);
}
