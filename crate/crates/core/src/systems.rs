//! Continuous-time plant and controller models, uniform quantizers, and the
//! zero-order-hold sampled maps built from them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{expm, Matrix};

/// Runge-Kutta substeps per sampling period.
pub const RK4_SUBSTEPS: usize = 64;

/// `ẋ = Ax + Bu`, `y = Cx + Du` with as many outputs as inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLti", into = "RawLti")]
pub struct LtiModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLti {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
}

impl TryFrom<RawLti> for LtiModel {
    type Error = Error;

    fn try_from(raw: RawLti) -> Result<Self> {
        LtiModel::new(raw.a, raw.b, raw.c, raw.d)
    }
}

impl From<LtiModel> for RawLti {
    fn from(m: LtiModel) -> Self {
        RawLti { a: m.a, b: m.b, c: m.c, d: m.d }
    }
}

fn check_quadruple(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Result<()> {
    let n = a.rows();
    if !a.is_square() {
        return dim_err(format!("A must be square, got {}x{}", a.rows(), a.cols()));
    }
    let m = b.cols();
    if b.rows() != n {
        return dim_err(format!("B has {} rows, A is {n}x{n}", b.rows()));
    }
    if c.rows() != m || c.cols() != n {
        return dim_err(format!("C must be {m}x{n}, got {}x{}", c.rows(), c.cols()));
    }
    if d.rows() != m || d.cols() != m {
        return dim_err(format!("D must be {m}x{m}, got {}x{}", d.rows(), d.cols()));
    }
    Ok(())
}

impl LtiModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        check_quadruple(&a, &b, &c, &d)?;
        Ok(LtiModel { a, b, c, d })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Input (and output) dimension.
    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.max_abs() == 0.0
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mul_vec(x)?;
        let bu = self.b.mul_vec(u)?;
        Ok(ax.iter().zip(&bu).map(|(p, q)| p + q).collect())
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        lin_output(&self.c, &self.d, x, u)
    }
}

fn lin_output(c: &Matrix, d: &Matrix, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let cx = c.mul_vec(x)?;
    let du = d.mul_vec(u)?;
    Ok(cx.iter().zip(&du).map(|(p, q)| p + q).collect())
}

pub type VectorField = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type OutputMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// `ẋ = f(x, u)`, `y = h1(x) + h2(u)`. A missing `h2` means no feedthrough.
#[derive(Clone)]
pub struct NonlinearModel {
    name: String,
    n: usize,
    m: usize,
    rhs: VectorField,
    h1: OutputMap,
    h2: Option<OutputMap>,
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("feedthrough", &self.h2.is_some())
            .finish()
    }
}

impl NonlinearModel {
    /// Checks dimensions and that the origin is an equilibrium with zero
    /// output.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        rhs: VectorField,
        h1: OutputMap,
        h2: Option<OutputMap>,
    ) -> Result<Self> {
        let model = NonlinearModel { name: name.into(), n, m, rhs, h1, h2 };
        let zx = vec![0.0; n];
        let zu = vec![0.0; m];
        let f0 = (model.rhs)(&zx, &zu);
        if f0.len() != n {
            return dim_err(format!("rhs returned {} entries, expected {n}", f0.len()));
        }
        if f0.iter().any(|v| v.abs() > 1e-12) {
            return param_err("rhs(0, 0) must vanish");
        }
        let y0 = model.output(&zx, &zu)?;
        if y0.iter().any(|v| v.abs() > 1e-12) {
            return param_err("h1(0) + h2(0) must vanish");
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.h2.is_none()
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.rhs)(x, u)
    }

    pub fn h1(&self, x: &[f64]) -> Vec<f64> {
        (self.h1)(x)
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut y = (self.h1)(x);
        if y.len() != self.m {
            return dim_err(format!("h1 returned {} entries, expected {}", y.len(), self.m));
        }
        if let Some(h2) = &self.h2 {
            let y2 = h2(u);
            if y2.len() != self.m {
                return dim_err(format!("h2 returned {} entries, expected {}", y2.len(), self.m));
            }
            for (a, b) in y.iter_mut().zip(y2) {
                *a += b;
            }
        }
        Ok(y)
    }
}

/// Either kind of continuous-time model.
#[derive(Debug, Clone)]
pub enum SystemModel {
    Lti(LtiModel),
    Nonlinear(NonlinearModel),
}

impl SystemModel {
    pub fn n(&self) -> usize {
        match self {
            SystemModel::Lti(m) => m.n(),
            SystemModel::Nonlinear(m) => m.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            SystemModel::Lti(m) => m.m(),
            SystemModel::Nonlinear(m) => m.m(),
        }
    }

    pub fn is_strictly_proper(&self) -> bool {
        match self {
            SystemModel::Lti(m) => m.is_strictly_proper(),
            SystemModel::Nonlinear(m) => m.is_strictly_proper(),
        }
    }

    pub fn as_lti(&self) -> Option<&LtiModel> {
        match self {
            SystemModel::Lti(m) => Some(m),
            SystemModel::Nonlinear(_) => None,
        }
    }
}

impl From<LtiModel> for SystemModel {
    fn from(m: LtiModel) -> Self {
        SystemModel::Lti(m)
    }
}

impl From<NonlinearModel> for SystemModel {
    fn from(m: NonlinearModel) -> Self {
        SystemModel::Nonlinear(m)
    }
}

/// Uniform quantizer with pitch `mu` on `dim` channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub mu: f64,
    pub dim: usize,
}

impl QuantizerSpec {
    pub fn new(mu: f64, dim: usize) -> Result<Self> {
        check_pitch(mu, "quantizer precision")?;
        Ok(QuantizerSpec { mu, dim })
    }

    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.dim {
            return dim_err(format!("quantizer has {} channels, got {}", self.dim, s.len()));
        }
        quantize(s, self.mu)
    }
}

fn check_pitch(mu: f64, what: &str) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param_err(format!("{what} must be positive and finite, got {mu}"));
    }
    Ok(())
}

/// Grid index of the toward-zero quantization of `s`: the integer `k` of
/// largest magnitude with `|k·mu| ≤ |s|` and the sign of `s`.
pub fn toward_zero_index(s: f64, mu: f64) -> f64 {
    let mag = s.abs();
    let mut k = (mag / mu).floor();
    while k > 0.0 && k * mu > mag {
        k -= 1.0;
    }
    while (k + 1.0) * mu <= mag {
        k += 1.0;
    }
    if s < 0.0 {
        -k
    } else {
        k
    }
}

/// Entrywise toward-zero quantization onto `mu·Z`.
pub fn quantize(s: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_pitch(mu, "quantizer precision")?;
    Ok(s.iter().map(|&v| toward_zero_index(v, mu) * mu).collect())
}

/// Nearest grid index with exact half-way ties resolved toward zero.
pub fn nearest_index(s: f64, eta: f64) -> f64 {
    let q = s / eta;
    if q >= 0.0 {
        (q - 0.5).ceil()
    } else {
        (q + 0.5).floor()
    }
}

/// Entrywise nearest-point quantization onto `eta·Z`.
pub fn quantize_nearest(s: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_pitch(eta, "state grid pitch")?;
    Ok(s.iter().map(|&v| nearest_index(v, eta) * eta).collect())
}

/// Exact zero-order-hold discretization `x⁺ = Ad x + Bd u`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLti {
    pub ad: Matrix,
    pub bd: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    /// Sampling period the map was built for; zero for natively discrete
    /// systems.
    pub tau: f64,
}

impl DiscreteLti {
    pub fn new(ad: Matrix, bd: Matrix, c: Matrix, d: Matrix, tau: f64) -> Result<Self> {
        check_quadruple(&ad, &bd, &c, &d)?;
        Ok(DiscreteLti { ad, bd, c, d, tau })
    }

    pub fn n(&self) -> usize {
        self.ad.rows()
    }

    pub fn m(&self) -> usize {
        self.bd.cols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let ax = self.ad.mul_vec(x)?;
        let bu = self.bd.mul_vec(u)?;
        Ok(ax.iter().zip(&bu).map(|(p, q)| p + q).collect())
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        lin_output(&self.c, &self.d, x, u)
    }
}

/// `Ad = e^{Aτ}` and `Bd = ∫₀^τ e^{As} B ds`, read off the exponential of
/// the augmented matrix `[[A, B], [0, 0]]·τ`.
pub fn discretize_exact(model: &LtiModel, tau: f64) -> Result<DiscreteLti> {
    check_pitch(tau, "sampling period")?;
    let (n, m) = (model.n(), model.m());
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &model.a.scale(tau));
    aug.set_block(0, n, &model.b.scale(tau));
    let e = expm(&aug)?;
    DiscreteLti::new(e.submatrix(0, 0, n, n), e.submatrix(0, n, n, m), model.c.clone(), model.d.clone(), tau)
}

/// State after holding `u` constant for `tau`, by classical RK4 with
/// `substeps` equal steps.
pub fn flow_with_substeps(model: &NonlinearModel, x0: &[f64], u: &[f64], tau: f64, substeps: usize) -> Result<Vec<f64>> {
    if x0.len() != model.n || u.len() != model.m {
        return dim_err(format!(
            "flow expects state {} and input {}, got {} and {}",
            model.n,
            model.m,
            x0.len(),
            u.len()
        ));
    }
    check_pitch(tau, "flow duration")?;
    if substeps == 0 {
        return param_err("substep count must be positive");
    }
    let h = tau / substeps as f64;
    let mut x = x0.to_vec();
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for step in 0..substeps {
        let k1 = model.rhs(&x, u);
        let k2 = model.rhs(&axpy(&x, &k1, h / 2.0), u);
        let k3 = model.rhs(&axpy(&x, &k2, h / 2.0), u);
        let k4 = model.rhs(&axpy(&x, &k3, h), u);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(x)
}

pub fn flow(model: &NonlinearModel, x0: &[f64], u: &[f64], tau: f64) -> Result<Vec<f64>> {
    flow_with_substeps(model, x0, u, tau, RK4_SUBSTEPS)
}

/// A continuous model seen through a zero-order hold and sampler.
#[derive(Debug, Clone)]
pub enum SampledModel {
    Lti(DiscreteLti),
    Nonlinear { model: NonlinearModel, tau: f64, substeps: usize },
}

impl SampledModel {
    pub fn new(model: &SystemModel, tau: f64) -> Result<Self> {
        match model {
            SystemModel::Lti(m) => Ok(SampledModel::Lti(discretize_exact(m, tau)?)),
            SystemModel::Nonlinear(m) => {
                check_pitch(tau, "sampling period")?;
                Ok(SampledModel::Nonlinear { model: m.clone(), tau, substeps: RK4_SUBSTEPS })
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SampledModel::Lti(d) => d.n(),
            SampledModel::Nonlinear { model, .. } => model.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            SampledModel::Lti(d) => d.m(),
            SampledModel::Nonlinear { model, .. } => model.m(),
        }
    }

    pub fn is_strictly_proper(&self) -> bool {
        match self {
            SampledModel::Lti(d) => d.d.max_abs() == 0.0,
            SampledModel::Nonlinear { model, .. } => model.is_strictly_proper(),
        }
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        match self {
            SampledModel::Lti(d) => d.step(x, u),
            SampledModel::Nonlinear { model, tau, substeps } => flow_with_substeps(model, x, u, *tau, *substeps),
        }
    }

    pub fn output(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        match self {
            SampledModel::Lti(d) => d.output(x, u),
            SampledModel::Nonlinear { model, .. } => model.output(x, u),
        }
    }
}
