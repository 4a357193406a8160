//! N-step strong detectability: certificates `(N, ϑ, p)` with quadratic
//! `p`, their exact verification for LTI systems, composition across a
//! feedback loop, and a sampling falsifier for everything else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{dot, inverse, min_eig, rank, Matrix, SymEig, SYMMETRY_TOL};
use crate::systems::{DiscreteLti, SampledModel};

/// Smallest eigenvalue the Schur complement must reach during synthesis.
pub const SD_SYNTH_MARGIN: f64 = 1e-8;
/// Largest detectability weight tried during synthesis.
pub const SD_THETA_MAX: f64 = 1e3;
/// Tolerance on the block form in [`check_sd_certificate`].
pub const SD_CHECK_TOL: f64 = 1e-9;

/// `Σ_{k=k0}^{k0+N} ϑ|u[k]|² + |y[k]|² ≥ xᵀMp x` for the initial state `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCert", into = "RawCert")]
pub struct SdCertificate {
    window: usize,
    theta: f64,
    mp: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCert {
    window: usize,
    theta: f64,
    mp: Matrix,
}

impl TryFrom<RawCert> for SdCertificate {
    type Error = Error;

    fn try_from(r: RawCert) -> Result<Self> {
        SdCertificate::new(r.window, r.theta, r.mp)
    }
}

impl From<SdCertificate> for RawCert {
    fn from(c: SdCertificate) -> Self {
        RawCert { window: c.window, theta: c.theta, mp: c.mp }
    }
}

impl SdCertificate {
    pub fn new(window: usize, theta: f64, mp: Matrix) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return param_err(format!("detectability weight must be finite and nonnegative, got {theta}"));
        }
        if !mp.is_symmetric(SYMMETRY_TOL) {
            return dim_err("certificate matrix must be square and symmetric");
        }
        let lmin = min_eig(&mp)?;
        if lmin <= 0.0 {
            return Err(Error::Certificate { message: "certificate matrix must be positive definite".into(), value: lmin });
        }
        Ok(SdCertificate { window, theta, mp: mp.symmetrized() })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mp(&self) -> &Matrix {
        &self.mp
    }

    pub fn p(&self, x: &[f64]) -> f64 {
        self.mp.quad_form(x).unwrap_or(f64::NAN)
    }
}

/// Stacked response `Y = O x + H U` over `window + 1` steps.
pub fn observability_stack(sys: &DiscreteLti, window: usize) -> (Matrix, Matrix) {
    let (n, m) = (sys.n(), sys.m());
    let s = sys.c.rows();
    let steps = window + 1;
    let mut o = Matrix::zeros(steps * s, n);
    let mut h = Matrix::zeros(steps * s, steps * m);
    // markov[j] = C Ad^{j-1} Bd for j ≥ 1, markov[0] = D.
    let mut markov = vec![sys.d.clone()];
    let mut c_pow = sys.c.clone();
    for k in 0..steps {
        o.set_block(k * s, 0, &c_pow);
        if k + 1 < steps {
            markov.push(&c_pow * &sys.bd);
            c_pow = &c_pow * &sys.ad;
        }
    }
    for k in 0..steps {
        for j in 0..=k {
            h.set_block(k * s, j * m, &markov[k - j]);
        }
    }
    (o, h)
}

fn schur(o: &Matrix, h: &Matrix, theta: f64) -> Result<Matrix> {
    let ot = o.transpose();
    let ht = h.transpose();
    let inner = &Matrix::identity(h.cols()).scale(theta) + &(&ht * h);
    let corr = &(&(&ot * h) * &inverse(&inner)?) * &(&ht * o);
    Ok((&(&ot * o) - &corr).symmetrized())
}

/// Smallest `ϑ ∈ (0, 10³]` (by bisection) whose Schur complement
/// `S(ϑ) = OᵀO − OᵀH(ϑI + HᵀH)⁻¹HᵀO` is positive definite with margin,
/// returned with `Mp = S(ϑ)/2`.
pub fn lti_sd_certificate(sys: &DiscreteLti, window: usize) -> Result<SdCertificate> {
    let (o, h) = observability_stack(sys, window);
    let r = rank(&o);
    if r < sys.n() {
        return Err(Error::NotStronglyDetectable { window, rank: r, dim: sys.n() });
    }
    let feasible = |theta: f64| -> Result<bool> { Ok(min_eig(&schur(&o, &h, theta)?)? >= SD_SYNTH_MARGIN) };
    let mut hi = SD_THETA_MAX;
    if !feasible(hi)? {
        let value = min_eig(&schur(&o, &h, hi)?)?;
        return Err(Error::Certificate { message: format!("no detectability weight up to {SD_THETA_MAX} works"), value });
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi.max(1e-3) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SdCertificate::new(window, hi, schur(&o, &h, hi)?.scale(0.5))
}

/// Certificate for a prescribed weight `ϑ > 0`, with `Mp = S(ϑ)/2`.
pub fn lti_sd_certificate_at(sys: &DiscreteLti, window: usize, theta: f64) -> Result<SdCertificate> {
    if !(theta > 0.0 && theta.is_finite()) {
        return param_err(format!("detectability weight must be positive, got {theta}"));
    }
    let (o, h) = observability_stack(sys, window);
    let r = rank(&o);
    if r < sys.n() {
        return Err(Error::NotStronglyDetectable { window, rank: r, dim: sys.n() });
    }
    let s = schur(&o, &h, theta)?;
    let value = min_eig(&s)?;
    if value < SD_SYNTH_MARGIN {
        return Err(Error::Certificate { message: format!("weight {theta} leaves no detectability margin"), value });
    }
    SdCertificate::new(window, theta, s.scale(0.5))
}

/// Exact check of a certificate on an LTI system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdVerdict {
    pub pass: bool,
    pub min_eig: f64,
    /// Minimizing direction `(x, U)` of the block form, useful as a
    /// counterexample when the check fails.
    pub witness: Vec<f64>,
}

/// `[[OᵀO − Mp, OᵀH], [HᵀO, ϑI + HᵀH]] ⪰ 0`, which is the certificate
/// inequality for all `(x, U)`.
pub fn check_sd_certificate(sys: &DiscreteLti, cert: &SdCertificate) -> Result<SdVerdict> {
    if cert.mp.rows() != sys.n() {
        return dim_err(format!("certificate is {}x{}, state dimension {}", cert.mp.rows(), cert.mp.cols(), sys.n()));
    }
    let (o, h) = observability_stack(sys, cert.window);
    let ot = o.transpose();
    let ht = h.transpose();
    let tl = &(&ot * &o) - &cert.mp;
    let tr = &ot * &h;
    let br = &Matrix::identity(h.cols()).scale(cert.theta) + &(&ht * &h);
    let block = Matrix::block(&[&[&tl, &tr], &[&tr.transpose(), &br]])?.symmetrized();
    let eig: SymEig = crate::linalg::sym_eig(&block)?;
    let min_eig = eig.min();
    Ok(SdVerdict { pass: min_eig >= -SD_CHECK_TOL, min_eig, witness: eig.vector(0) })
}

fn theta_compose(theta: f64) -> f64 {
    2.0 * theta / (2.0 * theta + 1.0)
}

/// Certificate for the interconnection of two detectable systems:
/// `N = max Nᵢ`, `ϑ = max 2ϑᵢ/(2ϑᵢ+1)`, `Mp = (1−ϑ)·blockdiag(Mp1, Mp2)`.
pub fn compose_sd(c1: &SdCertificate, c2: &SdCertificate) -> Result<SdCertificate> {
    let theta = theta_compose(c1.theta).max(theta_compose(c2.theta));
    let mp = Matrix::block_diag(&[&c1.mp, &c2.mp]).scale(1.0 - theta);
    SdCertificate::new(c1.window.max(c2.window), theta, mp)
}

/// Which closed-loop bound the composed certificate feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopVariant {
    /// Arbitrary bounded references.
    General,
    /// References identically zero.
    ZeroReference,
}

/// Certificate of the quantized loop, where the controller's detectability
/// survives quantization only at half strength: `p = (1−ϑ)(p1 + ½p2)` in
/// general and `p = p1 + ½p2` for zero references.
pub fn loop_sd_certificate(c1: &SdCertificate, c2: &SdCertificate, variant: LoopVariant) -> Result<SdCertificate> {
    let theta = theta_compose(c1.theta).max(theta_compose(c2.theta));
    let scale = match variant {
        LoopVariant::General => 1.0 - theta,
        LoopVariant::ZeroReference => 1.0,
    };
    let mp = Matrix::block_diag(&[&c1.mp, &c2.mp.scale(0.5)]).scale(scale);
    SdCertificate::new(c1.window.max(c2.window), theta, mp)
}

/// Sampling box for [`sd_falsify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalsifyBox {
    pub state: f64,
    pub input: f64,
}

impl Default for FalsifyBox {
    fn default() -> Self {
        FalsifyBox { state: 3.0, input: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x0: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifyReport {
    pub trials: usize,
    /// Largest `p(x0) / Σ(ϑ|u|² + |y|²)` seen.
    pub worst_ratio: f64,
    pub counterexample: Option<Counterexample>,
}

/// Ratios above `1 + FALSIFY_SLACK` count as counterexamples.
pub const FALSIFY_SLACK: f64 = 1e-9;

/// Draws `trials` random initial states and input windows uniformly from
/// the box and reports the worst certificate ratio. Trial `i` uses stream
/// `i` of a ChaCha generator seeded with `seed`.
pub fn sd_falsify(sys: &SampledModel, cert: &SdCertificate, trials: usize, bounds: FalsifyBox, seed: u64) -> Result<FalsifyReport> {
    let (n, m) = (sys.n(), sys.m());
    if cert.mp.rows() != n {
        return dim_err(format!("certificate is {}x{}, state dimension {n}", cert.mp.rows(), cert.mp.cols()));
    }
    let mut worst_ratio = 0.0_f64;
    let mut counterexample: Option<Counterexample> = None;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-bounds.state..=bounds.state)).collect();
        let inputs: Vec<Vec<f64>> = (0..=cert.window)
            .map(|_| (0..m).map(|_| rng.gen_range(-bounds.input..=bounds.input)).collect())
            .collect();
        let mut x = x0.clone();
        let mut energy = 0.0;
        for u in &inputs {
            let y = sys.output(&x, u)?;
            energy += cert.theta * dot(u, u) + dot(&y, &y);
            x = sys.step(&x, u)?;
        }
        let p0 = cert.p(&x0);
        let ratio = if energy > 0.0 {
            p0 / energy
        } else if p0 > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            if ratio > 1.0 + FALSIFY_SLACK {
                counterexample = Some(Counterexample { x0, inputs, ratio });
            }
        }
    }
    Ok(FalsifyReport { trials, worst_ratio, counterexample })
}
