use passquant::linalg::{cholesky, expm, lyap, quad_sublevel_max, sym_eig, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, max_norm1: f64) -> Matrix {
    let raw = Matrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let target = rng.gen_range(0.05..max_norm1);
    raw.scale(target / raw.norm1().max(1e-12))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    (&a + &a.transpose()).scale(0.5)
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    &(&a * &a.transpose()) + &Matrix::identity(n).scale(rng.gen_range(0.05..1.0))
}

fn series_exp(a: &Matrix, terms: usize) -> Matrix {
    let n = a.rows();
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..terms {
        term = (&term * a).scale(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).max_abs()
}

#[test]
fn expm_matches_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let n = 1 + i % 5;
        let a = random_matrix(&mut rng, n, 3.0);
        let e = expm(&a).unwrap();
        let s = series_exp(&a, 80);
        let rel = max_diff(&e, &s) / s.max_abs().max(1.0);
        assert!(rel <= 1e-9, "instance {i}: relative error {rel}");
    }
}

#[test]
fn expm_inverse_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let a = random_matrix(&mut rng, 4, 3.0);
        let p = &expm(&a).unwrap() * &expm(&a.scale(-1.0)).unwrap();
        assert!(max_diff(&p, &Matrix::identity(4)) <= 1e-7);
    }
}

#[test]
fn sym_eig_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..1000 {
        let n = 1 + i % 8;
        let a = random_symmetric(&mut rng, n);
        let eig = sym_eig(&a).unwrap();
        let mut v = Matrix::zeros(n, n);
        for j in 0..n {
            for (r, x) in eig.vector(j).iter().enumerate() {
                v.set_block(r, j, &Matrix::column(&[*x]));
            }
        }
        let recon = &(&v * &Matrix::diag(&eig.values)) * &v.transpose();
        assert!(max_diff(&recon, &a) <= 1e-9 * a.max_abs().max(1e-300), "instance {i}");
        assert!(max_diff(&(&v.transpose() * &v), &Matrix::identity(n)) <= 1e-8);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn cholesky_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..200 {
        let n = 1 + i % 6;
        let p = random_pd(&mut rng, n);
        let l = cholesky(&p).unwrap();
        assert!(max_diff(&(&l * &l.transpose()), &p) <= 1e-9 * p.max_abs().max(1.0));
    }
}

/// Largest `xᵀMx` over boundary points `x = d·√(ξ/dᵀPd)` for `count`
/// directions `d`, evenly spaced on the circle or a Fibonacci sphere.
fn boundary_sweep(m: &Matrix, p: &Matrix, xi: f64, count: usize) -> f64 {
    let n = m.rows();
    let mut best = f64::NEG_INFINITY;
    for i in 0..count {
        let d = if n == 2 {
            let t = std::f64::consts::PI * i as f64 / count as f64;
            vec![t.cos(), t.sin()]
        } else {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
            vec![r * phi.cos(), r * phi.sin(), z]
        };
        let s = (xi / p.quad_form(&d).unwrap()).sqrt();
        let x: Vec<f64> = d.iter().map(|v| v * s).collect();
        best = best.max(m.quad_form(&x).unwrap());
    }
    best
}

#[test]
fn sublevel_max_matches_boundary_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for i in 0..50 {
        let n = if i % 2 == 0 { 2 } else { 3 };
        let m = random_pd(&mut rng, n);
        let p = random_pd(&mut rng, n);
        let xi = rng.gen_range(0.1..10.0);
        let exact = quad_sublevel_max(&m, &p, xi).unwrap();
        let swept = boundary_sweep(&m, &p, xi, 100_000);
        assert!(swept <= exact * (1.0 + 1e-12), "instance {i}: sweep {swept} above {exact}");
        assert!((exact - swept).abs() <= 1e-3 * exact, "instance {i}: {exact} vs {swept}");
        let doubled = quad_sublevel_max(&m, &p, 2.0 * xi).unwrap();
        assert!((doubled - 2.0 * exact).abs() <= 1e-12 * doubled);
    }
}

#[test]
fn lyapunov_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let a = &random_matrix(&mut rng, 3, 2.0) - &Matrix::identity(3).scale(2.5);
        let q = random_pd(&mut rng, 3);
        let p = lyap(&a, &q).unwrap();
        let res = &(&(&a.transpose() * &p) + &(&p * &a)) + &q;
        assert!(res.max_abs() <= 1e-9 * q.max_abs());
    }
}
