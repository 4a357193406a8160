use passquant::abstraction::{check_bisim_params, inf_to_two_norm, lipschitz_output_bound, lti_delta_iss, SymbolicController};
use passquant::linalg::{norm2, norm_inf, Matrix};
use passquant::models::example1_controller;
use passquant::systems::{discretize_exact, quantize, quantize_nearest, LtiModel, SampledModel, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

#[test]
fn delta_iss_bound_holds_in_simulation() {
    let ctrl = example1_controller();
    let bound = lti_delta_iss(ctrl.a(), ctrl.b()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut r = |s: f64| -> Vec<f64> { (0..2).map(|_| rng.gen_range(-s..s)).collect() };
    let pairs: Vec<_> = (0..100).map(|_| (r(3.0), r(3.0), r(2.0), r(2.0))).collect();
    for k in 1..=20 {
        let t = 0.1 * k as f64;
        let sys = discretize_exact(&ctrl, t).unwrap();
        for (x1, x2, u, v) in &pairs {
            let gap = norm2(&diff(&sys.step(x1, u).unwrap(), &sys.step(x2, v).unwrap()));
            let allowed = bound.beta1(norm2(&diff(x1, x2)), t) + bound.beta2(norm2(&diff(u, v)));
            assert!(gap <= allowed * (1.0 + 1e-12), "t = {t}: {gap} > {allowed}");
        }
    }
}

#[test]
fn lipschitz_bound_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut cases = vec![example1_controller().c().clone()];
    for n in 1..6 {
        cases.push(Matrix::new(2, n, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
    }
    for c in cases {
        let l = inf_to_two_norm(&c);
        let mut best = 0.0_f64;
        for _ in 0..20_000 {
            let z: Vec<f64> = (0..c.cols()).map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.995..=1.0) } else { rng.gen_range(-1.0..=-0.995) }).collect();
            best = best.max(norm2(&c.mul_vec(&z).unwrap()));
        }
        assert!(best <= l * (1.0 + 1e-12) && best >= 0.99 * l, "{best} vs {l}");
    }
    let model: SystemModel = example1_controller().into();
    assert_eq!(lipschitz_output_bound(&model, None).unwrap(), inf_to_two_norm(example1_controller().c()));
}

/// Sampled and symbolic copies of a controller driven by inputs that differ
/// by at most `mu` entrywise, from states at most `eps` apart.
fn tracking_run(ctrl: &LtiModel, rng: &mut ChaCha8Rng, tau: f64, mu: f64, eta: f64, eps: f64, steps: usize) -> f64 {
    let model: SystemModel = ctrl.clone().into();
    let sampled = SampledModel::new(&model, tau).unwrap();
    let bound = lti_delta_iss(ctrl.a(), ctrl.b()).unwrap();
    let x0: Vec<f64> = (0..ctrl.n()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut xs0 = quantize_nearest(&x0, eta).unwrap();
    for (v, x) in xs0.iter_mut().zip(&x0) {
        // Any grid point within eps of x0 is admissible.
        let shift = eta * (rng.gen_range(-(eps / eta).floor()..=(eps / eta).floor())).round();
        if (*v + shift - x).abs() <= eps {
            *v += shift;
        }
    }
    let mut sym = SymbolicController::new(sampled.clone(), eta, mu, eps, &xs0, Some(&bound)).unwrap();
    let mut x = x0;
    let mut worst = norm_inf(&diff(&x, &sym.state()));
    for _ in 0..steps {
        let v = quantize(&(0..ctrl.m()).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>(), mu).unwrap();
        let u: Vec<f64> = v.iter().map(|p| p + rng.gen_range(-mu..=mu)).collect();
        x = sampled.step(&x, &u).unwrap();
        sym.symbolic_step(&v).unwrap();
        let s = sym.state();
        assert_eq!(quantize_nearest(&s, eta).unwrap(), s);
        worst = worst.max(norm_inf(&diff(&x, &s)));
    }
    worst
}

#[test]
fn bisimulation_tracking() {
    let ctrl = example1_controller();
    let bound = lti_delta_iss(ctrl.a(), ctrl.b()).unwrap();
    let (tau, mu, eps) = (0.3, 0.01, 0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for eta in [0.1, 0.05, 0.01] {
        assert!(check_bisim_params(&bound, eps, tau, mu, eta).unwrap().pass);
        for _ in 0..34 {
            let worst = tracking_run(&ctrl, &mut rng, tau, mu, eta, eps, 100);
            assert!(worst <= eps, "eta {eta}: gap {worst}");
        }
    }
}

#[test]
fn symbolic_step_is_deterministic() {
    let model: SystemModel = example1_controller().into();
    let sampled = SampledModel::new(&model, 0.3).unwrap();
    let run = || {
        let mut s = SymbolicController::new(sampled.clone(), 0.05, 0.01, 0.25, &[1.5, -1.6], None).unwrap();
        (0..200).map(|k| s.symbolic_step(&[0.01 * (k % 7) as f64, -0.02]).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
