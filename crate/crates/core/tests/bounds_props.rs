use passquant::bounds::{thm4_bounds, LoopBoundInputs, LoopIndices};
use passquant::detectability::SdCertificate;
use passquant::linalg::Matrix;
use passquant::passivity::QuadraticStorage;

struct Knobs {
    r_norm: f64,
    mu1: f64,
    mu2: f64,
    delta: f64,
}

fn level_d2(k: &Knobs, indices: LoopIndices, d3: Option<f64>) -> (f64, f64, f64) {
    let cert = SdCertificate::new(1, 0.4, Matrix::diag(&[0.5, 0.3, 0.2])).unwrap();
    let storage = QuadraticStorage::new(Matrix::diag(&[1.0, 2.0, 0.5])).unwrap();
    let inp = LoopBoundInputs {
        indices,
        delta_tilde2: k.delta,
        cert: &cert,
        theta2: 0.3,
        window2: 1,
        mu1: k.mu1,
        mu2: k.mu2,
        m: 1,
        storage: &storage,
        r_norm: k.r_norm,
        d3,
        v_first: &[0.0, 0.0],
    };
    let rep = thm4_bounds(&inp).unwrap();
    (rep.level_d2, rep.constant("d1").unwrap(), rep.constant("d2").unwrap())
}

#[test]
fn level_nondecreasing_in_noise() {
    let general = LoopIndices::General { nu_hat: -0.5, rho_hat: 0.8, lambda: None };
    let zero = LoopIndices::ZeroReference { plant_output: 0.3, controller_output: 0.2 };
    let steps: Vec<f64> = (0..10).map(|i| 0.02 * i as f64).collect();
    for indices in [general, zero] {
        for d3 in [None, Some(0.01)] {
            for axis in 0..4 {
                let mut prev = f64::NEG_INFINITY;
                for &s in &steps {
                    let mut k = Knobs { r_norm: 0.1, mu1: 0.01, mu2: 0.01, delta: 0.01 };
                    match axis {
                        0 => k.r_norm = s,
                        1 => k.mu1 = s,
                        2 => k.mu2 = s,
                        _ => k.delta = s,
                    }
                    let (lvl, _, _) = level_d2(&k, indices, d3);
                    assert!(lvl >= prev, "axis {axis} at {s}: {lvl} < {prev}");
                    prev = lvl;
                }
            }
        }
    }
}

#[test]
fn zero_noise_collapses_offsets() {
    let k = Knobs { r_norm: 0.0, mu1: 0.0, mu2: 0.0, delta: 0.0 };
    for indices in [LoopIndices::General { nu_hat: -0.5, rho_hat: 0.8, lambda: None }, LoopIndices::ZeroReference { plant_output: 0.3, controller_output: 0.2 }] {
        let (lvl, d1, d2) = level_d2(&k, indices, None);
        assert_eq!((d1, d2), (0.0, 0.0));
        // Only the free constant d3 remains: 1e-3 scaled by max P/Mp.
        let expected = 1e-3 * [1.0 / 0.5, 2.0 / 0.3, 0.5 / 0.2].into_iter().fold(0.0, f64::max);
        assert!((lvl - expected).abs() <= 1e-12, "{lvl} vs {expected}");
    }
}
