use passquant::detectability::{check_sd_certificate, lti_sd_certificate, lti_sd_certificate_at, SdCertificate};
use passquant::linalg::{dot, Matrix};
use passquant::systems::DiscreteLti;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DiscreteLti {
    let mut g = |r: usize, c: usize, s: f64| Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-s..s)).collect()).unwrap();
    let (a, b, c, d) = (g(n, n, 0.8), g(n, m, 1.0), g(m, n, 1.0), g(m, m, 0.5));
    DiscreteLti::new(a, b, c, d, 1.0).unwrap()
}

/// `Σ_{k≤N} ϑ|u[k]|² + |y[k]|² − p(x[0])` by direct simulation.
fn slack(sys: &DiscreteLti, cert: &SdCertificate, x0: &[f64], inputs: &[Vec<f64>]) -> f64 {
    let mut x = x0.to_vec();
    let mut energy = 0.0;
    for u in inputs {
        let y = sys.output(&x, u).unwrap();
        energy += cert.theta() * dot(u, u) + dot(&y, &y);
        x = sys.step(&x, u).unwrap();
    }
    energy - cert.p(x0)
}

#[test]
fn synthesized_certificates_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut made = 0;
    for i in 0..60 {
        let (n, m) = (1 + i % 3, 1 + i % 2);
        let sys = random_system(&mut rng, n, m);
        for window in 0..3 {
            if let Ok(cert) = lti_sd_certificate(&sys, window) {
                assert!(check_sd_certificate(&sys, &cert).unwrap().pass);
                made += 1;
            }
        }
    }
    assert!(made > 50);
}

#[test]
fn block_verdict_implies_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut passing = 0;
    for i in 0..100 {
        let sys = random_system(&mut rng, 2, 1 + i % 2);
        let window = 1 + i % 2;
        let Ok(base) = lti_sd_certificate_at(&sys, window, rng.gen_range(0.1..5.0)) else { continue };
        // Inflate by up to 3x so that some certificates fail.
        let cert = SdCertificate::new(window, base.theta(), base.mp().scale(rng.gen_range(0.5..3.0))).unwrap();
        let verdict = check_sd_certificate(&sys, &cert).unwrap();
        if verdict.pass {
            passing += 1;
            for _ in 0..100 {
                let x0: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let inputs: Vec<Vec<f64>> = (0..=window).map(|_| (0..sys.m()).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
                let s = slack(&sys, &cert, &x0, &inputs);
                assert!(s >= -1e-8 * (1.0 + cert.p(&x0)), "slack {s}");
            }
        } else {
            let w = &verdict.witness;
            let x0 = &w[..2];
            let inputs: Vec<Vec<f64>> = w[2..].chunks(sys.m()).map(<[f64]>::to_vec).collect();
            assert!(slack(&sys, &cert, x0, &inputs) < 0.0);
        }
    }
    assert!(passing > 20);
}
