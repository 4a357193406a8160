//! Incremental stability bounds for LTI controllers, the parameter
//! condition for an approximately bisimilar grid abstraction, and the
//! executable symbolic controller on that grid.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{lyap, norm2, spectral_norm, sym_eig, Matrix};
use crate::systems::{nearest_index, toward_zero_index, SampledModel, SystemModel};

/// `|x(t,x1,u) − x(t,x2,v)| ≤ C·e^{−at}·|x1 − x2| + Kg·‖u − v‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaIssBound {
    pub c: f64,
    pub a: f64,
    pub kg: f64,
}

impl DeltaIssBound {
    pub fn new(c: f64, a: f64, kg: f64) -> Result<Self> {
        if !(c >= 1.0) || !(a > 0.0) || !(kg >= 0.0) {
            return param_err(format!("need C >= 1, a > 0, Kg >= 0; got C={c}, a={a}, Kg={kg}"));
        }
        Ok(DeltaIssBound { c, a, kg })
    }

    pub fn beta1(&self, r: f64, t: f64) -> f64 {
        self.c * (-self.a * t).exp() * r
    }

    pub fn beta2(&self, s: f64) -> f64 {
        self.kg * s
    }
}

/// Quadratic Lyapunov construction: with `AᵀP + PA = −I`,
/// `a = 1/(2λmax(P))`, `C = √(λmax/λmin)` and `Kg = C·‖B‖₂/a`.
pub fn lti_delta_iss(a: &Matrix, b: &Matrix) -> Result<DeltaIssBound> {
    let p = lyap(a, &Matrix::identity(a.rows()))?;
    let eig = sym_eig(&p)?;
    let (lmin, lmax) = (eig.min(), eig.max());
    let decay = 1.0 / (2.0 * lmax);
    let c = (lmax / lmin).sqrt();
    DeltaIssBound::new(c, decay, c * spectral_norm(b) / decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisimCheck {
    /// `ε − (β1(ε, τ) + β2(μ) + η/2)`.
    pub slack: f64,
    pub pass: bool,
}

pub fn check_bisim_params(bound: &DeltaIssBound, epsilon: f64, tau: f64, mu: f64, eta: f64) -> Result<BisimCheck> {
    for (name, v) in [("epsilon", epsilon), ("tau", tau), ("mu", mu), ("eta", eta)] {
        if !(v > 0.0 && v.is_finite()) {
            return param_err(format!("{name} must be positive, got {v}"));
        }
    }
    let slack = epsilon - (bound.beta1(epsilon, tau) + bound.beta2(mu) + eta / 2.0);
    Ok(BisimCheck { slack, pass: slack >= 0.0 })
}

/// Sampled controller whose state is kept on the grid `η·Zⁿ` and whose
/// inputs must lie on `μ·Zᵐ`.
#[derive(Debug, Clone)]
pub struct SymbolicController {
    sampled: SampledModel,
    eta: f64,
    mu: f64,
    epsilon: f64,
    state: Vec<i64>,
    steps: usize,
    check: Option<BisimCheck>,
}

impl SymbolicController {
    /// Starts from the grid point nearest to `x0`. When `bound` is given the
    /// bisimulation condition is enforced; otherwise the controller is
    /// marked unchecked.
    pub fn new(sampled: SampledModel, eta: f64, mu: f64, epsilon: f64, x0: &[f64], bound: Option<&DeltaIssBound>) -> Result<Self> {
        if !(eta > 0.0) || !(mu > 0.0) || !(epsilon > 0.0) {
            return param_err(format!("eta, mu, epsilon must be positive; got {eta}, {mu}, {epsilon}"));
        }
        if x0.len() != sampled.n() {
            return Err(Error::Dimension(format!("initial state has {} entries, expected {}", x0.len(), sampled.n())));
        }
        let check = match bound {
            Some(b) => {
                let tau = match &sampled {
                    SampledModel::Lti(d) => d.tau,
                    SampledModel::Nonlinear { tau, .. } => *tau,
                };
                let c = check_bisim_params(b, epsilon, tau, mu, eta)?;
                if !c.pass {
                    return Err(Error::Certificate { message: "grid parameters violate the bisimulation condition".into(), value: c.slack });
                }
                Some(c)
            }
            None => None,
        };
        let state = to_grid(x0, eta, 0)?;
        Ok(SymbolicController { sampled, eta, mu, epsilon, state, steps: 0, check })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `None` when constructed without a stability bound.
    pub fn check(&self) -> Option<BisimCheck> {
        self.check
    }

    pub fn grid_index(&self) -> &[i64] {
        &self.state
    }

    pub fn state(&self) -> Vec<f64> {
        self.state.iter().map(|&k| k as f64 * self.eta).collect()
    }

    fn require_input_grid(&self, u: &[f64]) -> Result<()> {
        for (i, &v) in u.iter().enumerate() {
            if toward_zero_index(v, self.mu) * self.mu != v {
                return Err(Error::Contract(format!("input {i} = {v} is not on the grid of pitch {}", self.mu)));
            }
        }
        Ok(())
    }

    /// Advances by one exact sampled step and snaps to the nearest grid
    /// point.
    pub fn symbolic_step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        self.require_input_grid(u)?;
        let next = self.sampled.step(&self.state(), u)?;
        self.state = to_grid(&next, self.eta, self.steps)?;
        self.steps += 1;
        Ok(self.state())
    }

    pub fn symbolic_output(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.require_input_grid(u)?;
        self.sampled.output(&self.state(), u)
    }
}

fn to_grid(x: &[f64], eta: f64, step: usize) -> Result<Vec<i64>> {
    x.iter()
        .map(|&v| {
            let k = nearest_index(v, eta);
            if !k.is_finite() || k.abs() > 9.0e15 {
                Err(Error::Divergence { step })
            } else {
                Ok(k as i64)
            }
        })
        .collect()
}

/// Largest state dimension for which the exact `∞→2` norm is computed by
/// enumerating the vertices of the unit cube.
pub const EXACT_NORM_MAX_DIM: usize = 20;

/// `max_{|z|∞ ≤ 1} |Cz|₂`, attained at a vertex of the cube; beyond
/// [`EXACT_NORM_MAX_DIM`] columns the row-sum bound
/// `√Σᵢ(Σⱼ|Cᵢⱼ|)²` is returned instead.
pub fn inf_to_two_norm(c: &Matrix) -> f64 {
    let n = c.cols();
    if n == 0 {
        return 0.0;
    }
    if n > EXACT_NORM_MAX_DIM {
        return (0..c.rows()).map(|i| c.row(i).iter().map(|v| v.abs()).sum::<f64>().powi(2)).sum::<f64>().sqrt();
    }
    let mut best = 0.0_f64;
    let mut z = vec![1.0; n];
    // The first sign is fixed because z and −z give the same norm.
    for mask in 0..(1u64 << (n - 1)) {
        for (j, zj) in z.iter_mut().enumerate().skip(1) {
            *zj = if mask >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 };
        }
        best = best.max(norm2(&c.mul_vec(&z).expect("dimension checked")));
    }
    best
}

/// Lipschitz constant `L` with `|h(z1) − h(z2)|₂ ≤ L|z1 − z2|∞` for the
/// state part of the output map. Nonlinear models need `supplied`.
pub fn lipschitz_output_bound(model: &SystemModel, supplied: Option<f64>) -> Result<f64> {
    if let Some(l) = supplied {
        if !(l >= 0.0 && l.is_finite()) {
            return param_err(format!("Lipschitz constant must be nonnegative, got {l}"));
        }
        return Ok(l);
    }
    match model {
        SystemModel::Lti(m) => Ok(inf_to_two_norm(m.c())),
        SystemModel::Nonlinear(m) => param_err(format!("model '{}' needs a user-supplied Lipschitz constant", m.name())),
    }
}
