//! Passivity indices: LMI verification for LTI systems, degradation under
//! sampling and quantization, feedback composition, and trajectory audits.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{dot, max_eig, Matrix, SYMMETRY_TOL};
use crate::systems::{DiscreteLti, LtiModel};

/// Tolerance on the largest eigenvalue of a dissipation LMI.
pub const LMI_TOL: f64 = 1e-8;

/// Supply-rate indices `(ν, ρ, δ)` plus the weight `w` of a state-dependent
/// initial bias `w·β(x₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    pub nu: f64,
    pub rho: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub w: f64,
}

impl IndexSet {
    pub fn new(nu: f64, rho: f64, delta: f64, w: f64) -> Result<Self> {
        if !(delta >= 0.0) || !(w >= 0.0) {
            return param_err(format!("bias terms must be nonnegative, got delta={delta}, w={w}"));
        }
        if !nu.is_finite() || !rho.is_finite() || !delta.is_finite() || !w.is_finite() {
            return param_err("indices must be finite");
        }
        Ok(IndexSet { nu, rho, delta, w })
    }

    /// Plain IF-OFP indices without bias.
    pub fn ifofp(nu: f64, rho: f64) -> Self {
        IndexSet { nu, rho, delta: 0.0, w: 0.0 }
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0 && self.w == 0.0
    }

    /// `uᵀy − ν|u|² − ρ|y|² + δ`.
    pub fn supply(&self, u: &[f64], y: &[f64]) -> f64 {
        dot(u, y) - self.nu * dot(u, u) - self.rho * dot(y, y) + self.delta
    }
}

/// `V(x) = xᵀPx` with `P` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticStorage {
    pub p: Matrix,
}

impl QuadraticStorage {
    pub fn new(p: Matrix) -> Result<Self> {
        check_psd(&p, "storage matrix")?;
        Ok(QuadraticStorage { p: p.symmetrized() })
    }

    pub fn scaled_identity(n: usize, s: f64) -> Result<Self> {
        QuadraticStorage::new(Matrix::identity(n).scale(s))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.p.quad_form(x).unwrap_or(f64::NAN)
    }
}

pub(crate) fn check_psd(p: &Matrix, what: &str) -> Result<()> {
    if !p.is_square() {
        return dim_err(format!("{what} must be square"));
    }
    let lmin = crate::linalg::min_eig(p)?;
    if lmin < -SYMMETRY_TOL {
        return Err(Error::Certificate { message: format!("{what} is not positive semidefinite"), value: lmin });
    }
    Ok(())
}

/// Output-derivative gain `γ` with initial bias `β(x) = xᵀMβx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub gamma: f64,
    pub m_beta: Matrix,
}

impl GainCertificate {
    pub fn new(gamma: f64, m_beta: Matrix) -> Result<Self> {
        if !(gamma > 0.0) {
            return param_err(format!("gain must be positive, got {gamma}"));
        }
        check_psd(&m_beta, "bias matrix")?;
        Ok(GainCertificate { gamma, m_beta })
    }
}

/// Free positive parameters trading index loss against bias growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoices {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
}

impl Default for LambdaChoices {
    fn default() -> Self {
        LambdaChoices { l1: 10.0, l2: 20.0, l3: 20.0, l4: 20.0, l5: 20.0 }
    }
}

impl LambdaChoices {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("l3", self.l3), ("l4", self.l4), ("l5", self.l5)] {
            if !(v > 0.0 && v.is_finite()) {
                return param_err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// LTI system whose dissipation LMI is assembled in continuous or
/// discrete time.
#[derive(Debug, Clone, Copy)]
pub enum LtiForm<'a> {
    Continuous(&'a LtiModel),
    Discrete(&'a DiscreteLti),
}

impl LtiForm<'_> {
    fn parts(&self) -> (&Matrix, &Matrix, &Matrix, &Matrix) {
        match self {
            LtiForm::Continuous(m) => (m.a(), m.b(), m.c(), m.d()),
            LtiForm::Discrete(d) => (&d.ad, &d.bd, &d.c, &d.d),
        }
    }
}

/// Largest eigenvalue of an LMI together with its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiVerdict {
    pub pass: bool,
    pub max_eig: f64,
}

impl LmiVerdict {
    fn from_max_eig(max_eig: f64) -> Self {
        LmiVerdict { pass: max_eig <= LMI_TOL, max_eig }
    }
}

/// Symmetric matrix whose negative semidefiniteness is equivalent to
/// `V̇ ≤ uᵀy − ν|u|² − ρ|y|²` (or its one-step difference form).
pub fn passivity_lmi(sys: LtiForm<'_>, storage: &QuadraticStorage, nu: f64, rho: f64) -> Result<Matrix> {
    let (a, b, c, d) = sys.parts();
    let p = &storage.p;
    if p.rows() != a.rows() {
        return dim_err(format!("storage is {}x{}, state dimension {}", p.rows(), p.cols(), a.rows()));
    }
    let m = b.cols();
    let ct = c.transpose();
    let bt = b.transpose();
    let (m11, m12, m22_base) = match sys {
        LtiForm::Continuous(_) => (&(&a.transpose() * p) + &(p * a), p * b, Matrix::zeros(m, m)),
        LtiForm::Discrete(_) => {
            let atp = &a.transpose() * p;
            (&(&atp * a) - p, &atp * b, &(&bt * p) * b)
        }
    };
    let m11 = &m11 + &(&ct * c).scale(rho);
    let m12 = &(&m12 - &ct.scale(0.5)) + &(&ct * d).scale(rho);
    let m22 = &(&(&m22_base + &Matrix::identity(m).scale(nu)) - &(d + &d.transpose()).scale(0.5))
        + &(&d.transpose() * d).scale(rho);
    Ok(Matrix::block(&[&[&m11, &m12], &[&m12.transpose(), &m22]])?.symmetrized())
}

pub fn verify_lti_passivity(sys: LtiForm<'_>, storage: &QuadraticStorage, nu: f64, rho: f64) -> Result<LmiVerdict> {
    Ok(LmiVerdict::from_max_eig(max_eig(&passivity_lmi(sys, storage, nu, rho)?)?))
}

/// Verdicts for indices published to a fixed number of decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundedVerdict {
    /// At the indices exactly as given.
    pub strict: LmiVerdict,
    /// At the lower corner of the rounding box, i.e. the weakest indices
    /// that still round to the given ones.
    pub rounded: LmiVerdict,
    pub nu_checked: f64,
    pub rho_checked: f64,
}

/// Checks indices quoted with `nu_decimals` and `rho_decimals` digits.
/// Lowering either index only relaxes the LMI, so the lower corner of the
/// rounding box passes iff some pair rounding to the quoted values does.
pub fn verify_lti_passivity_rounded(
    sys: LtiForm<'_>,
    storage: &QuadraticStorage,
    nu: f64,
    rho: f64,
    nu_decimals: u32,
    rho_decimals: u32,
) -> Result<RoundedVerdict> {
    let strict = verify_lti_passivity(sys, storage, nu, rho)?;
    let nu_checked = nu - 0.5 * 10f64.powi(-(nu_decimals as i32));
    let rho_checked = rho - 0.5 * 10f64.powi(-(rho_decimals as i32));
    let rounded = verify_lti_passivity(sys, storage, nu_checked, rho_checked)?;
    Ok(RoundedVerdict { strict, rounded, nu_checked, rho_checked })
}

/// Which index is held fixed during a bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedIndex {
    Nu(f64),
    Rho(f64),
}

/// Largest value of the free index in `[-10, 10]` for which the LMI holds,
/// to within `1e-5`.
pub fn max_index_bisection(sys: LtiForm<'_>, storage: &QuadraticStorage, fixed: FixedIndex) -> Result<f64> {
    let passes = |v: f64| -> Result<bool> {
        let (nu, rho) = match fixed {
            FixedIndex::Nu(nu) => (nu, v),
            FixedIndex::Rho(rho) => (v, rho),
        };
        Ok(verify_lti_passivity(sys, storage, nu, rho)?.pass)
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    if !passes(lo)? {
        let (nu, rho) = match fixed {
            FixedIndex::Nu(nu) => (nu, lo),
            FixedIndex::Rho(rho) => (lo, rho),
        };
        let value = max_eig(&passivity_lmi(sys, storage, nu, rho)?)?;
        return Err(Error::Certificate { message: "LMI infeasible at the lower search bound -10".into(), value });
    }
    if passes(hi)? {
        return Ok(hi);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Output-derivative gain LMI for `h₁(x) = Cx` with `β(x) = xᵀMβx`.
pub fn gain_lmi(model: &LtiModel, cert: &GainCertificate) -> Result<Matrix> {
    let (a, b, c) = (model.a(), model.b(), model.c());
    let p = &cert.m_beta;
    if p.rows() != a.rows() {
        return dim_err(format!("bias matrix is {}x{}, state dimension {}", p.rows(), p.cols(), a.rows()));
    }
    let ca = c * a;
    let cb = c * b;
    let m11 = &(&(&a.transpose() * p) + &(p * a)) + &(&ca.transpose() * &ca);
    let m12 = &(p * b) + &(&ca.transpose() * &cb);
    let m22 = &(&cb.transpose() * &cb) - &Matrix::identity(b.cols()).scale(cert.gamma * cert.gamma);
    Ok(Matrix::block(&[&[&m11, &m12], &[&m12.transpose(), &m22]])?.symmetrized())
}

pub fn verify_gain_assumption(model: &LtiModel, cert: &GainCertificate) -> Result<LmiVerdict> {
    Ok(LmiVerdict::from_max_eig(max_eig(&gain_lmi(model, cert)?)?))
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return param_err(format!("{name} must be positive, got {v}"));
    }
    Ok(())
}

fn require_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return param_err(format!("{name} must be nonnegative, got {v}"));
    }
    Ok(())
}

/// Indices of the sampled system with storage `V/τ`. The returned set has
/// `δ = 0` and carries the bias weight `w`.
pub fn degrade_sampling(nu: f64, rho: f64, gamma: f64, tau: f64, l1: f64) -> Result<IndexSet> {
    require_positive("gamma", gamma)?;
    require_positive("tau", tau)?;
    require_positive("l1", l1)?;
    let ar = rho.abs();
    let nu_p = nu - tau * gamma - tau * tau * gamma * gamma * (1.0 + l1) * ar;
    let rho_p = rho - ar / l1;
    let w = ar * tau * (1.0 + l1) + 1.0 / gamma;
    IndexSet::new(nu_p, rho_p, 0.0, w)
}

/// Indices after uniform input (`μ1`) and output (`μ2`) quantization on `m`
/// channels. The returned set has `w = 0`.
pub fn degrade_quantization(nu_p: f64, rho_p: f64, mu1: f64, mu2: f64, m: usize, lambdas: &LambdaChoices) -> Result<IndexSet> {
    require_nonneg("mu1", mu1)?;
    require_nonneg("mu2", mu2)?;
    for (name, v) in [("l2", lambdas.l2), ("l3", lambdas.l3), ("l4", lambdas.l4), ("l5", lambdas.l5)] {
        require_positive(name, v)?;
    }
    if m == 0 {
        return param_err("channel count must be at least 1");
    }
    let mf = m as f64;
    let nu_t = nu_p - nu_p.abs() / lambdas.l3 - 1.0 / (4.0 * lambdas.l4);
    let rho_t = rho_p - rho_p.abs() / lambdas.l2 - 1.0 / (4.0 * lambdas.l5);
    let delta = (rho_p.abs() * (1.0 + lambdas.l2) + lambdas.l4) * mf * mu2 * mu2
        + (nu_p.abs() * (1.0 + lambdas.l3) + lambdas.l5) * mf * mu1 * mu1;
    IndexSet::new(nu_t, rho_t, delta, 0.0)
}

/// Sampling followed by quantization, keeping the sampling bias weight.
pub fn degrade(
    continuous: &IndexSet,
    gamma: f64,
    tau: f64,
    mu1: f64,
    mu2: f64,
    m: usize,
    lambdas: &LambdaChoices,
) -> Result<(IndexSet, IndexSet)> {
    let sampled = degrade_sampling(continuous.nu, continuous.rho, gamma, tau, lambdas.l1)?;
    let mut quantized = degrade_quantization(sampled.nu, sampled.rho, mu1, mu2, m, lambdas)?;
    quantized.w = sampled.w;
    Ok((sampled, quantized))
}

/// Quantization bias of a symbolic controller whose output error also
/// includes `L·ε` from the state abstraction.
#[allow(clippy::too_many_arguments)]
pub fn symbolic_quant_bias(
    nu_p: f64,
    rho_p: f64,
    lipschitz: f64,
    epsilon: f64,
    mu1: f64,
    mu2: f64,
    m: usize,
    lambdas: &LambdaChoices,
) -> Result<f64> {
    require_nonneg("L", lipschitz)?;
    require_nonneg("epsilon", epsilon)?;
    require_nonneg("mu1", mu1)?;
    require_nonneg("mu2", mu2)?;
    for (name, v) in [("l2", lambdas.l2), ("l3", lambdas.l3), ("l4", lambdas.l4), ("l5", lambdas.l5)] {
        require_positive(name, v)?;
    }
    if m == 0 {
        return param_err("channel count must be at least 1");
    }
    let mf = m as f64;
    let out = lipschitz * epsilon + 3.0 * mf.sqrt() * mu2;
    Ok((rho_p.abs() * (1.0 + lambdas.l2) + lambdas.l4) * out * out
        + (nu_p.abs() * (1.0 + lambdas.l3) + lambdas.l5) * mf * mu1 * mu1)
}

/// Indices of a negative-feedback interconnection. The initial bias is
/// `w1·β1(x1) + w2·β2(x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopIndexSet {
    pub nu_hat: f64,
    pub rho_hat: f64,
    pub delta_hat: f64,
    pub w1: f64,
    pub w2: f64,
}

pub fn compose_feedback(i1: &IndexSet, i2: &IndexSet, nu_hat: f64) -> Result<LoopIndexSet> {
    if !(nu_hat < i1.nu) {
        return param_err(format!("nu_hat = {nu_hat} must be strictly below nu1 = {}", i1.nu));
    }
    if !(nu_hat < i2.nu) {
        return param_err(format!("nu_hat = {nu_hat} must be strictly below nu2 = {}", i2.nu));
    }
    let a = i1.rho - nu_hat * i2.nu / (i2.nu - nu_hat);
    let b = i2.rho - nu_hat * i1.nu / (i1.nu - nu_hat);
    Ok(LoopIndexSet { nu_hat, rho_hat: a.min(b), delta_hat: i1.delta + i2.delta, w1: i1.w, w2: i2.w })
}

/// `ν̂ ∈ (min{ν1,ν2} − 10, min{ν1,ν2})` maximizing `ρ̂`, by golden-section
/// search to `1e-6`.
pub fn choose_nu_hat(i1: &IndexSet, i2: &IndexSet) -> Result<f64> {
    let top = i1.nu.min(i2.nu);
    if !top.is_finite() {
        return param_err("feedforward indices must be finite");
    }
    let rho_hat = |v: f64| compose_feedback(i1, i2, v).map(|l| l.rho_hat).unwrap_or(f64::NEG_INFINITY);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = top - 10.0;
    let mut b = top - 1e-9;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (rho_hat(c), rho_hat(d));
    while b - a > 1e-6 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = rho_hat(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = rho_hat(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Recorded signals of a single system: `x` has one more entry than `u`
/// and `y`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoTrajectory {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

/// Longest trajectory the all-windows audit accepts.
pub const AUDIT_MAX_STEPS: usize = 500;

/// Largest value of
/// `V(x[k1]) − V(x[k0]) − w·β(x[k0]) − Σ_{k0 ≤ k < k1} (uᵀy − ν|u|² − ρ|y|² + δ)`
/// over all windows `0 ≤ k0 ≤ k1 ≤ K`. Nonpositive means the dissipation
/// inequality held along the trajectory.
pub fn dissipation_audit(
    traj: &IoTrajectory,
    v: impl Fn(&[f64]) -> f64,
    idx: &IndexSet,
    beta: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let k = traj.u.len();
    if traj.y.len() != k || traj.x.len() != k + 1 {
        return dim_err(format!(
            "trajectory arrays misaligned: {} states, {} inputs, {} outputs",
            traj.x.len(),
            k,
            traj.y.len()
        ));
    }
    if k > AUDIT_MAX_STEPS {
        return param_err(format!("audit horizon {k} exceeds {AUDIT_MAX_STEPS}"));
    }
    let mut prefix = vec![0.0; k + 1];
    for i in 0..k {
        if traj.u[i].len() != traj.y[i].len() {
            return dim_err(format!("step {i}: input and output lengths differ"));
        }
        prefix[i + 1] = prefix[i] + idx.supply(&traj.u[i], &traj.y[i]);
    }
    let vals: Vec<f64> = traj.x.iter().map(|x| v(x)).collect();
    let mut worst = f64::NEG_INFINITY;
    for k0 in 0..=k {
        let bias = idx.w * beta(&traj.x[k0]);
        for k1 in k0..=k {
            let viol = vals[k1] - vals[k0] - bias - (prefix[k1] - prefix[k0]);
            worst = worst.max(viol);
        }
    }
    Ok(worst)
}
