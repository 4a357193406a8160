//! Global and ultimate sublevel-set bounds for output-strictly passive,
//! strongly detectable systems and their quantized feedback loops, plus
//! the condition tying the initial bias to the detectability function.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detectability::{LoopVariant, SdCertificate};
use crate::error::{dim_err, param_err, Result};
use crate::linalg::{min_eig, quad_sublevel_max, Matrix};
use crate::passivity::{IndexSet, QuadraticStorage};

/// Levels of the storage function bounding the state for all time (`D1`)
/// and eventually (`D2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eta1: f64,
    pub eta2: f64,
    pub level_d1: f64,
    pub level_d2: f64,
    /// Intermediate constants by name (`c1`…`c5`, `xi1`…`xi4`, or
    /// `d1`…`d4`).
    pub constants: BTreeMap<String, f64>,
    /// Matrix of the storage function the levels refer to.
    pub storage: Matrix,
}

impl BoundReport {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
}

fn etas(nu: f64, rho: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < rho) {
        return param_err(format!("lambda = {lambda} must lie in (0, rho) with rho = {rho}"));
    }
    let eta1 = 1.0 / (4.0 * lambda) - nu;
    if !(eta1 > 0.0) {
        return param_err(format!(
            "eta1 = 1/(4 lambda) - nu = {eta1} is not positive; choose a smaller lambda (nu = {nu} is too large)"
        ));
    }
    Ok((eta1, rho - lambda))
}

fn check_same_dim(storage: &QuadraticStorage, cert: &SdCertificate) -> Result<()> {
    if storage.p.rows() != cert.mp().rows() {
        return dim_err(format!(
            "storage is {}x{}, detectability matrix is {}x{}",
            storage.p.rows(),
            storage.p.cols(),
            cert.mp().rows(),
            cert.mp().cols()
        ));
    }
    Ok(())
}

/// Bounds for a single quasi-passive, strongly detectable system driven
/// by inputs with sup-norm `u_norm`. `p_x0` is `p(x[0])`.
pub fn lemma4_bounds(
    idx: &IndexSet,
    cert: &SdCertificate,
    storage: &QuadraticStorage,
    u_norm: f64,
    lambda: f64,
    c5: f64,
    p_x0: f64,
) -> Result<BoundReport> {
    check_same_dim(storage, cert)?;
    if !(u_norm >= 0.0) || !(c5 > 0.0) || !(p_x0 >= 0.0) {
        return param_err("input norm and p(x0) must be nonnegative and c5 positive");
    }
    let (eta1, eta2) = etas(idx.nu, idx.rho, lambda)?;
    let n1 = (cert.window() + 1) as f64;
    let u2 = u_norm * u_norm;
    let c2 = n1 * ((eta1 + cert.theta() * eta2) * u2 + idx.delta);
    let c3 = n1 * (eta1 * u2 + idx.delta);
    let xi2 = p_x0.max(c2 / eta2);
    let c1 = quad_sublevel_max(&storage.p, cert.mp(), xi2)?;
    let xi1 = c1 + c3;
    let xi4 = (c2 + c5) / eta2;
    let c4 = quad_sublevel_max(&storage.p, cert.mp(), xi4)?;
    let xi3 = c2 + c4;
    let constants = [("c1", c1), ("c2", c2), ("c3", c3), ("c4", c4), ("c5", c5), ("xi1", xi1), ("xi2", xi2), ("xi3", xi3), ("xi4", xi4)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(BoundReport { eta1, eta2, level_d1: xi1, level_d2: xi3, constants, storage: storage.p.clone() })
}

/// Hypotheses on the loop indices, by reference variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopIndices {
    /// Composed indices `(ν̂, ρ̂)` with the split `λ ∈ (0, ρ̂)`; `None`
    /// selects `ρ̂/2`.
    General { nu_hat: f64, rho_hat: f64, lambda: Option<f64> },
    /// Cross sums `ν̃2 + ρ1′` and `ν1′ + ρ̃2`, both required positive.
    ZeroReference { plant_output: f64, controller_output: f64 },
}

impl LoopIndices {
    pub fn variant(&self) -> LoopVariant {
        match self {
            LoopIndices::General { .. } => LoopVariant::General,
            LoopIndices::ZeroReference { .. } => LoopVariant::ZeroReference,
        }
    }
}

/// Everything the closed-loop bounds need besides the output-error radius.
#[derive(Debug, Clone)]
pub struct LoopBoundInputs<'a> {
    pub indices: LoopIndices,
    /// Constant bias `δ̃2` of the quantized (or symbolic) controller.
    pub delta_tilde2: f64,
    /// Loop certificate from `loop_sd_certificate`.
    pub cert: &'a SdCertificate,
    pub theta2: f64,
    pub window2: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub m: usize,
    /// Loop storage on the stacked state `(x1, x2)`.
    pub storage: &'a QuadraticStorage,
    /// Sup-norm of the stacked reference over the horizon.
    pub r_norm: f64,
    /// `None` selects `10⁻³·(d1 + d2 + 1)`.
    pub d3: Option<f64>,
    /// Storage values at steps `0..=N`.
    pub v_first: &'a [f64],
}

/// Closed-loop bounds with a sampled, quantized controller.
pub fn thm4_bounds(inp: &LoopBoundInputs<'_>) -> Result<BoundReport> {
    let out = inp.m as f64 * inp.mu2 * inp.mu2;
    loop_bounds(inp, out)
}

/// Closed-loop bounds with a symbolic controller whose output error
/// includes `L·ε` from the state abstraction.
pub fn symbolic_bounds(inp: &LoopBoundInputs<'_>, lipschitz: f64, epsilon: f64) -> Result<BoundReport> {
    if !(lipschitz >= 0.0) || !(epsilon >= 0.0) {
        return param_err("Lipschitz constant and precision must be nonnegative");
    }
    let r = lipschitz * epsilon + 3.0 * (inp.m as f64).sqrt() * inp.mu2;
    loop_bounds(inp, r * r)
}

fn loop_bounds(inp: &LoopBoundInputs<'_>, output_radius_sq: f64) -> Result<BoundReport> {
    check_same_dim(inp.storage, inp.cert)?;
    if inp.m == 0 {
        return param_err("channel count must be at least 1");
    }
    for (name, v) in [("delta_tilde2", inp.delta_tilde2), ("theta2", inp.theta2), ("mu1", inp.mu1), ("mu2", inp.mu2), ("r_norm", inp.r_norm)] {
        if !(v >= 0.0 && v.is_finite()) {
            return param_err(format!("{name} must be finite and nonnegative, got {v}"));
        }
    }
    let n1 = (inp.cert.window() + 1) as f64;
    let n2 = (inp.window2 + 1) as f64;
    let theta = inp.cert.theta();
    let mf = inp.m as f64;
    let input_term = inp.theta2 * mf * inp.mu1 * inp.mu1;
    let (eta1, eta2, d1, d2) = match inp.indices {
        LoopIndices::General { nu_hat, rho_hat, lambda } => {
            if !(rho_hat > 0.0) {
                return param_err(format!("composed rho_hat = {rho_hat} must be positive"));
            }
            let lambda = lambda.unwrap_or(rho_hat / 2.0);
            let (eta1, eta2) = etas(nu_hat, rho_hat, lambda)?;
            let d1 = n1 * ((eta1 + theta * eta2) * inp.r_norm * inp.r_norm + inp.delta_tilde2);
            let d2 = (1.0 - theta) * n2 * (input_term + output_radius_sq);
            (eta1, eta2, d1, d2)
        }
        LoopIndices::ZeroReference { plant_output, controller_output } => {
            if !(plant_output > 0.0) || !(controller_output > 0.0) {
                return param_err(format!(
                    "cross indices must be positive, got {plant_output} and {controller_output}"
                ));
            }
            (0.0, 1.0, n1 * inp.delta_tilde2, n2 * (input_term + output_radius_sq))
        }
    };
    let d3 = inp.d3.unwrap_or(1e-3 * (d1 + d2 + 1.0));
    if !(d3 > 0.0) {
        return param_err(format!("d3 must be positive, got {d3}"));
    }
    let d4 = quad_sublevel_max(&inp.storage.p, inp.cert.mp(), d1 + d2 + d3)?;
    let level_d2 = d1 + d2 + d4;
    let level_d1 = inp.v_first.iter().copied().fold(level_d2, f64::max);
    let constants = [("d1", d1), ("d2", d2), ("d3", d3), ("d4", d4)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok(BoundReport { eta1, eta2, level_d1, level_d2, constants, storage: inp.storage.p.clone() })
}

/// Smallest eigenvalue of `η2·Mp − blockdiag(w1·Mβ1, w2·Mβ2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginCertificate {
    pub min_eig: f64,
    pub pass: bool,
    /// `κ(x) = xᵀKx`.
    pub kappa: Matrix,
}

pub const MARGIN_TOL: f64 = 1e-9;

pub fn margin_check(eta2: f64, mp: &Matrix, w1: f64, m_beta1: &Matrix, w2: f64, m_beta2: &Matrix) -> Result<MarginCertificate> {
    let wb = Matrix::block_diag(&[&m_beta1.scale(w1), &m_beta2.scale(w2)]);
    if wb.rows() != mp.rows() || !mp.is_square() {
        return dim_err(format!("bias block is {}x{}, detectability matrix {}x{}", wb.rows(), wb.cols(), mp.rows(), mp.cols()));
    }
    let kappa = (&mp.scale(eta2) - &wb).symmetrized();
    let min_eig = min_eig(&kappa)?;
    Ok(MarginCertificate { min_eig, pass: min_eig > MARGIN_TOL, kappa })
}

/// Coefficients of an input-to-state practical stability estimate for a
/// system with `a|x|^q ≤ V ≤ b|x|^q + d1` and `p(x) ≥ c|x|^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IspsCertificate {
    pub eta1: f64,
    pub eta2: f64,
    /// `α1(s) = alpha1·s^q`.
    pub alpha1: f64,
    /// `α2(s) = alpha2·s^q`.
    pub alpha2: f64,
    /// `α3(s) = alpha3·s^q`.
    pub alpha3: f64,
    /// `σ(s) = sigma·s²`.
    pub sigma: f64,
    pub d1: f64,
    pub d2: f64,
    pub exponent: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn isps_certificate(exponent: f64, a: f64, b: f64, c: f64, d1: f64, nu: f64, rho: f64, delta: f64, theta: f64) -> Result<IspsCertificate> {
    if !(rho > 0.0) {
        return param_err(format!("rho must be positive, got {rho}"));
    }
    if !(exponent > 0.0) || !(a > 0.0) || !(b > 0.0) || !(c > 0.0) {
        return param_err("exponent and comparison coefficients must be positive");
    }
    let (eta1, eta2) = etas(nu, rho, rho / 2.0)?;
    Ok(IspsCertificate {
        eta1,
        eta2,
        alpha1: a,
        alpha2: b,
        alpha3: eta2 * c,
        sigma: eta1 + theta * eta2,
        d1,
        d2: delta,
        exponent,
    })
}

/// `k·s^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponent: f64,
}

impl Monomial {
    pub fn new(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff > 0.0) || !(exponent > 0.0) {
            return param_err(format!("monomial needs positive coefficient and exponent, got {coeff}, {exponent}"));
        }
        Ok(Monomial { coeff, exponent })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeff * s.powf(self.exponent)
    }

    pub fn inverse(&self, s: f64) -> f64 {
        (s / self.coeff).powf(1.0 / self.exponent)
    }
}

/// `ξ5 = α4⁻¹(α5⁻¹(E))` with `E = (η1 + ϑη2)‖u‖² + δ`, `α5 = ½·id` and
/// `α4 = min(α3∘α2⁻¹, ½·id)`.
pub fn ultimate_bound_kfun(eta1: f64, eta2: f64, theta: f64, delta: f64, u_norm: f64, alpha3: Monomial, alpha2: Monomial) -> Result<f64> {
    Monomial::new(alpha3.coeff, alpha3.exponent)?;
    Monomial::new(alpha2.coeff, alpha2.exponent)?;
    let energy = (eta1 + theta * eta2) * u_norm * u_norm + delta;
    if !(energy >= 0.0) {
        return param_err(format!("input energy must be nonnegative, got {energy}"));
    }
    let s = 2.0 * energy;
    // Inverse of α3∘α2⁻¹ is α2∘α3⁻¹.
    let via_alpha = alpha2.eval(alpha3.inverse(s));
    Ok(via_alpha.max(2.0 * s))
}
