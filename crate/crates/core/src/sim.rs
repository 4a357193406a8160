//! Closed-loop simulation of a sampled plant with a quantized controller
//! (exact, symbolic, or disturbance-driven), trajectory recording, CSV
//! export, and audits of certified bounds.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{DeltaIssBound, SymbolicController};
use crate::bounds::BoundReport;
use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{norm2, norm_inf};
use crate::passivity::QuadraticStorage;
use crate::systems::{quantize, quantize_nearest, SampledModel, SystemModel};

/// Tolerance on storage values when auditing levels.
pub const AUDIT_TOL: f64 = 1e-6;

/// A reference signal on `m` channels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Reference {
    #[default]
    Zero,
    Constant(Vec<f64>),
    /// One entry per step; the last entry is held if the horizon is longer.
    Sequence(Vec<Vec<f64>>),
}

impl Reference {
    pub fn at(&self, k: usize, m: usize) -> Vec<f64> {
        match self {
            Reference::Zero => vec![0.0; m],
            Reference::Constant(v) => v.clone(),
            Reference::Sequence(seq) => seq.get(k).or(seq.last()).cloned().unwrap_or_else(|| vec![0.0; m]),
        }
    }

    fn check(&self, m: usize, name: &str) -> Result<()> {
        let bad = match self {
            Reference::Zero => false,
            Reference::Constant(v) => v.len() != m,
            Reference::Sequence(seq) => seq.is_empty() || seq.iter().any(|v| v.len() != m),
        };
        if bad {
            return dim_err(format!("reference {name} must have {m} channels"));
        }
        Ok(())
    }
}

/// Sup over `k < horizon` of `|(r1[k], r2[k])|₂`.
pub fn reference_sup_norm(r1: &Reference, r2: &Reference, m: usize, horizon: usize) -> f64 {
    (0..horizon)
        .map(|k| {
            let a = r1.at(k, m);
            let b = r2.at(k, m);
            (a.iter().chain(&b).map(|v| v * v).sum::<f64>()).sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DisturbanceSource {
    /// `w = Q2(y2ˢ) − Q2(y2)` where `y2ˢ` comes from a symbolic copy of the
    /// controller driven by the same inputs.
    ShadowSymbolic { eta: f64 },
    /// Independent uniform draws inside the bound.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoopMode {
    SampledQuantized,
    Symbolic { eta: f64, epsilon: f64 },
    /// Sampled controller with an additive disturbance on its quantized
    /// output, bounded by `L·ε + 2√m·μ2`.
    DisturbanceInjected { epsilon: f64, lipschitz: f64, source: DisturbanceSource },
}

/// Plant in negative feedback with a sampled, input- and
/// output-quantized controller.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub plant: SystemModel,
    pub controller: SystemModel,
    pub mode: LoopMode,
    pub tau: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub r1: Reference,
    pub r2: Reference,
    pub horizon: usize,
    pub x1_0: Vec<f64>,
    pub x2_0: Vec<f64>,
    /// Initial symbolic state; defaults to the grid point nearest `x2_0`.
    pub x2s_0: Option<Vec<f64>>,
    /// Storage on the stacked state `(x1, x2)`.
    pub storage: Option<QuadraticStorage>,
    /// When present, symbolic controllers are built only if the grid
    /// parameters satisfy the bisimulation condition.
    pub bisim_bound: Option<DeltaIssBound>,
}

impl LoopConfig {
    /// Channel count shared by both subsystems.
    pub fn m(&self) -> usize {
        self.plant.m()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v > 0.0 && v.is_finite()) {
                return param_err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.horizon == 0 {
            return param_err("horizon must be at least 1");
        }
        if self.plant.m() != self.controller.m() {
            return dim_err(format!("plant has {} channels, controller {}", self.plant.m(), self.controller.m()));
        }
        if !self.plant.is_strictly_proper() {
            return Err(Error::WellPosedness("the plant output must not depend on its current input".into()));
        }
        if self.x1_0.len() != self.plant.n() || self.x2_0.len() != self.controller.n() {
            return dim_err("initial states do not match the model dimensions");
        }
        let m = self.m();
        self.r1.check(m, "r1")?;
        self.r2.check(m, "r2")?;
        if let Some(s) = &self.storage {
            if s.p.rows() != self.plant.n() + self.controller.n() {
                return dim_err(format!("loop storage is {}x{}, stacked state has {}", s.p.rows(), s.p.cols(), self.plant.n() + self.controller.n()));
            }
        }
        match self.mode {
            LoopMode::SampledQuantized => {}
            LoopMode::Symbolic { eta, epsilon } => {
                if !(eta > 0.0) || !(epsilon > 0.0) {
                    return param_err("symbolic mode needs positive eta and epsilon");
                }
                if let Some(xs) = &self.x2s_0 {
                    let gap = xs.iter().zip(&self.x2_0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if xs.len() != self.x2_0.len() || gap > epsilon {
                        return param_err(format!("initial symbolic state is {gap} away from x2(0), more than epsilon"));
                    }
                }
            }
            LoopMode::DisturbanceInjected { epsilon, lipschitz, source } => {
                if !(epsilon >= 0.0) || !(lipschitz >= 0.0) {
                    return param_err("disturbance mode needs nonnegative epsilon and Lipschitz constant");
                }
                if let DisturbanceSource::ShadowSymbolic { eta } = source {
                    if !(eta > 0.0) {
                        return param_err("shadow symbolic controller needs a positive eta");
                    }
                }
            }
        }
        Ok(())
    }

    /// Bound on the injected disturbance, `L·ε + 2√m·μ2`.
    pub fn disturbance_bound(&self) -> Option<f64> {
        match self.mode {
            LoopMode::DisturbanceInjected { epsilon, lipschitz, .. } => Some(lipschitz * epsilon + 2.0 * (self.m() as f64).sqrt() * self.mu2),
            _ => None,
        }
    }
}

/// Per-step record of the loop. States have `horizon + 1` entries, signals
/// `horizon`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub x1: Vec<Vec<f64>>,
    /// Controller state actually in the loop (`x2ˢ` in symbolic mode).
    pub x2: Vec<Vec<f64>>,
    /// Symbolic shadow state in disturbance mode.
    pub x2_shadow: Vec<Vec<f64>>,
    pub r1: Vec<Vec<f64>>,
    pub r2: Vec<Vec<f64>>,
    pub u1: Vec<Vec<f64>>,
    pub u2_tilde: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub y1: Vec<Vec<f64>>,
    pub y2: Vec<Vec<f64>>,
    pub y2_tilde: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.u1.len()
    }

    pub fn stacked_state(&self, k: usize) -> Vec<f64> {
        let mut s = self.x1[k].clone();
        s.extend_from_slice(&self.x2[k]);
        s
    }
}

fn finite_or(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

fn at_step<T>(r: Result<T>, step: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::Divergence { .. } => Error::Divergence { step },
        other => other,
    })
}

enum Controller {
    Sampled { model: SampledModel, x: Vec<f64> },
    Symbolic(SymbolicController),
}

impl Controller {
    fn state(&self) -> Vec<f64> {
        match self {
            Controller::Sampled { x, .. } => x.clone(),
            Controller::Symbolic(s) => s.state(),
        }
    }

    fn output(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            Controller::Sampled { model, x } => model.output(x, u),
            Controller::Symbolic(s) => s.symbolic_output(u),
        }
    }

    fn advance(&mut self, u: &[f64]) -> Result<()> {
        match self {
            Controller::Sampled { model, x } => {
                *x = model.step(x, u)?;
                Ok(())
            }
            Controller::Symbolic(s) => s.symbolic_step(u).map(|_| ()),
        }
    }
}

/// Runs the loop for `config.horizon` steps.
///
/// Each step evaluates the plant output, forms `ũ2 = r2 + y1`, quantizes
/// it to `u2`, evaluates and quantizes the controller output to `ỹ2`
/// (adding the disturbance in disturbance mode), applies `u1 = r1 − ỹ2`,
/// and then advances both subsystems over one period.
pub fn simulate(config: &LoopConfig) -> Result<Trajectory> {
    config.validate()?;
    let m = config.m();
    let plant = SampledModel::new(&config.plant, config.tau)?;
    let ctrl_model = SampledModel::new(&config.controller, config.tau)?;

    let symbolic_start = |eta: f64, eps: f64, bound: Option<&DeltaIssBound>| -> Result<SymbolicController> {
        let x0 = match &config.x2s_0 {
            Some(xs) => xs.clone(),
            None => quantize_nearest(&config.x2_0, eta)?,
        };
        SymbolicController::new(ctrl_model.clone(), eta, config.mu1, eps, &x0, bound)
    };

    let mut ctrl = match config.mode {
        LoopMode::Symbolic { eta, epsilon } => Controller::Symbolic(symbolic_start(eta, epsilon, config.bisim_bound.as_ref())?),
        _ => Controller::Sampled { model: ctrl_model.clone(), x: config.x2_0.clone() },
    };
    let mut shadow = match config.mode {
        LoopMode::DisturbanceInjected { epsilon, source: DisturbanceSource::ShadowSymbolic { eta }, .. } => {
            Some(symbolic_start(eta, epsilon.max(f64::MIN_POSITIVE), None)?)
        }
        _ => None,
    };
    let mut rng = match config.mode {
        LoopMode::DisturbanceInjected { source: DisturbanceSource::Random { seed }, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let w_bound = config.disturbance_bound().unwrap_or(0.0);

    let k_max = config.horizon;
    let mut t = Trajectory::default();
    let mut x1 = config.x1_0.clone();
    t.x1.push(x1.clone());
    t.x2.push(ctrl.state());
    if let Some(s) = &shadow {
        t.x2_shadow.push(s.state());
    }

    for k in 0..k_max {
        let r1 = config.r1.at(k, m);
        let r2 = config.r2.at(k, m);
        let y1 = plant.output(&x1, &vec![0.0; m])?;
        let u2_tilde: Vec<f64> = r2.iter().zip(&y1).map(|(a, b)| a + b).collect();
        let u2 = quantize(&u2_tilde, config.mu1)?;
        let y2 = ctrl.output(&u2)?;
        let mut y2_tilde = quantize(&y2, config.mu2)?;
        let w = if let Some(s) = &shadow {
            let ys = quantize(&s.symbolic_output(&u2)?, config.mu2)?;
            ys.iter().zip(&y2_tilde).map(|(a, b)| a - b).collect()
        } else if let Some(rng) = rng.as_mut() {
            let half = w_bound / (m as f64).sqrt();
            (0..m).map(|_| if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 }).collect()
        } else {
            vec![0.0; m]
        };
        if matches!(config.mode, LoopMode::DisturbanceInjected { .. }) {
            for (a, b) in y2_tilde.iter_mut().zip(&w) {
                *a += b;
            }
        }
        let u1: Vec<f64> = r1.iter().zip(&y2_tilde).map(|(a, b)| a - b).collect();

        x1 = at_step(plant.step(&x1, &u1), k)?;
        finite_or(&x1, k)?;
        at_step(ctrl.advance(&u2), k)?;
        let x2 = ctrl.state();
        finite_or(&x2, k)?;
        if let Some(s) = shadow.as_mut() {
            at_step(s.symbolic_step(&u2), k)?;
            t.x2_shadow.push(s.state());
        }

        t.r1.push(r1);
        t.r2.push(r2);
        t.u1.push(u1);
        t.u2_tilde.push(u2_tilde);
        t.u2.push(u2);
        t.y1.push(y1);
        t.y2.push(y2);
        t.y2_tilde.push(y2_tilde);
        t.w.push(w);
        t.x1.push(x1.clone());
        t.x2.push(x2);
    }
    if let Some(s) = &config.storage {
        t.v = (0..=k_max).map(|k| s.value(&t.stacked_state(k))).collect();
    }
    Ok(t)
}

/// Outcome of checking a trajectory against a [`BoundReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    /// `V(x[k]) ≤ level_D1` for every recorded step.
    pub global_ok: bool,
    /// First step from which `V` stays within `level_D2` until the end.
    pub entry_index: Option<usize>,
    /// First step at which `V` is within `level_D2`.
    pub first_entry: Option<usize>,
    /// `V` entered `level_D2` and never left it afterwards.
    pub post_entry_ok: bool,
    pub max_v: f64,
    pub max_v_after_entry: Option<f64>,
}

/// Audits recorded storage values (tolerance [`AUDIT_TOL`]).
pub fn ultimate_bound_audit(v: &[f64], report: &BoundReport) -> BoundAudit {
    let max_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let global_ok = v.iter().all(|&x| x <= report.level_d1 + AUDIT_TOL);
    let inside = |x: f64| x <= report.level_d2 + AUDIT_TOL;
    let first_entry = v.iter().position(|&x| inside(x));
    let entry_index = match v.iter().rposition(|&x| !inside(x)) {
        None => Some(0),
        Some(last_out) if last_out + 1 < v.len() => Some(last_out + 1),
        Some(_) => None,
    };
    let max_v_after_entry = entry_index.map(|e| v[e..].iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let post_entry_ok = first_entry.is_some() && first_entry == entry_index;
    BoundAudit { global_ok, entry_index, first_entry, post_entry_ok, max_v, max_v_after_entry }
}

/// Sup-norms over the final third of a symbolic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSweepEntry {
    pub eta: f64,
    /// `sup |(x1, x2ˢ)|₂`.
    pub ultimate_sup: f64,
    pub ultimate_sup_x1: f64,
    pub ultimate_sup_x2: f64,
}

/// First state index of the final third of a horizon.
pub fn tail_start(horizon: usize) -> usize {
    (2 * horizon).div_ceil(3)
}

pub fn ultimate_sup_norms(t: &Trajectory) -> (f64, f64, f64) {
    let start = tail_start(t.horizon());
    let mut out = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in start..t.x1.len() {
        out.0 = out.0.max(norm2(&t.stacked_state(k)));
        out.1 = out.1.max(norm2(&t.x1[k]));
        out.2 = out.2.max(norm2(&t.x2[k]));
    }
    out
}

/// Runs the symbolic loop once per grid pitch, concurrently, keeping the
/// trajectories.
pub fn eta_sweep_runs(config: &LoopConfig, etas: &[f64]) -> Result<Vec<Trajectory>> {
    let epsilon = match config.mode {
        LoopMode::Symbolic { epsilon, .. } => epsilon,
        _ => return param_err("eta sweep needs symbolic mode"),
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = etas
            .iter()
            .map(|&eta| {
                let mut cfg = config.clone();
                cfg.mode = LoopMode::Symbolic { eta, epsilon };
                s.spawn(move || simulate(&cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("simulation thread panicked".into())))).collect()
    })
}

/// Ultimate sup-norms per grid pitch.
pub fn eta_sweep(config: &LoopConfig, etas: &[f64]) -> Result<Vec<EtaSweepEntry>> {
    let runs = eta_sweep_runs(config, etas)?;
    Ok(etas.iter().zip(&runs).map(|(&eta, run)| sweep_entry(eta, run)).collect())
}

pub fn sweep_entry(eta: f64, run: &Trajectory) -> EtaSweepEntry {
    let (all, a, b) = ultimate_sup_norms(run);
    EtaSweepEntry { eta, ultimate_sup: all, ultimate_sup_x1: a, ultimate_sup_x2: b }
}

/// Whether sup-norms sorted by decreasing pitch never grow by more than
/// the relative `slack` between neighbours.
pub fn sweep_is_monotone(entries: &[EtaSweepEntry], slack: f64) -> bool {
    let mut sorted: Vec<&EtaSweepEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    sorted.windows(2).all(|w| w[1].ultimate_sup <= w[0].ultimate_sup * (1.0 + slack))
}

/// Largest `|x2 − x2ˢ|∞` over a disturbance-mode trajectory with shadow.
pub fn shadow_gap(t: &Trajectory) -> f64 {
    t.x2.iter().zip(&t.x2_shadow).map(|(a, b)| norm_inf(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>())).fold(0.0, f64::max)
}

const SIGNALS: [&str; 6] = ["u1", "u2tilde", "u2", "y1", "y2", "y2tilde"];

/// CSV with one row per step `k = 0..=K`; signal columns of the last row
/// are empty since signals exist only for `k < K`.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let n1 = t.x1.first().map_or(0, Vec::len);
    let n2 = t.x2.first().map_or(0, Vec::len);
    let m = t.u1.first().map_or(0, Vec::len);
    let mut header = vec!["k".to_string()];
    header.extend((1..=n1).map(|i| format!("x1_{i}")));
    header.extend((1..=n2).map(|i| format!("x2_{i}")));
    for s in SIGNALS {
        header.extend((1..=m).map(|i| format!("{s}_{i}")));
    }
    header.push("V".into());
    let mut out = header.join(",");
    out.push('\n');
    let horizon = t.horizon();
    for k in 0..=horizon {
        let mut row = vec![k.to_string()];
        row.extend(t.x1[k].iter().map(|v| format!("{v:.16e}")));
        row.extend(t.x2[k].iter().map(|v| format!("{v:.16e}")));
        for sig in [&t.u1, &t.u2_tilde, &t.u2, &t.y1, &t.y2, &t.y2_tilde] {
            if k < horizon {
                row.extend(sig[k].iter().map(|v| format!("{v:.16e}")));
            } else {
                row.extend(std::iter::repeat_n(String::new(), m));
            }
        }
        row.push(t.v.get(k).map(|v| format!("{v:.16e}")).unwrap_or_default());
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Parses the output of [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parameter("empty trajectory file".into()))?.split(',').collect();
    let count = |prefix: &str| header.iter().filter(|h| h.strip_prefix(prefix).is_some_and(|r| r.parse::<usize>().is_ok())).count();
    let (n1, n2, m) = (count("x1_"), count("x2_"), count("u1_"));
    let expected = 1 + n1 + n2 + 6 * m + 1;
    if header.len() != expected || header.first() != Some(&"k") || header.last() != Some(&"V") {
        return param_err(format!("unexpected trajectory header with {} columns", header.len()));
    }
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    if rows.is_empty() {
        return param_err("trajectory file has no rows");
    }
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::Parameter(format!("row {line}: cannot parse '{s}'")))
    };
    let mut t = Trajectory::default();
    let horizon = rows.len() - 1;
    for (k, row) in rows.iter().enumerate() {
        if row.len() != expected {
            return param_err(format!("row {k} has {} columns, expected {expected}", row.len()));
        }
        let mut col = 1;
        let mut take = |len: usize| -> Result<Vec<f64>> {
            let v = row[col..col + len].iter().map(|s| parse(s, k)).collect::<Result<Vec<_>>>();
            col += len;
            v
        };
        t.x1.push(take(n1)?);
        t.x2.push(take(n2)?);
        if k < horizon {
            let sigs: Vec<Vec<f64>> = (0..6).map(|_| take(m)).collect::<Result<_>>()?;
            let mut it = sigs.into_iter();
            t.u1.push(it.next().unwrap_or_default());
            t.u2_tilde.push(it.next().unwrap_or_default());
            t.u2.push(it.next().unwrap_or_default());
            t.y1.push(it.next().unwrap_or_default());
            t.y2.push(it.next().unwrap_or_default());
            t.y2_tilde.push(it.next().unwrap_or_default());
        }
        let v = row[expected - 1].trim();
        if !v.is_empty() {
            t.v.push(parse(v, k)?);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::models::{example1_controller, example5_plant};
    use std::collections::BTreeMap;

    fn example5(mode: LoopMode, horizon: usize) -> LoopConfig {
        LoopConfig {
            plant: example5_plant().into(),
            controller: example1_controller().into(),
            mode,
            tau: 0.3,
            mu1: 0.01,
            mu2: 0.01,
            r1: Reference::Zero,
            r2: Reference::Zero,
            horizon,
            x1_0: vec![-0.7, -2.0],
            x2_0: vec![1.5, -1.6],
            x2s_0: None,
            storage: None,
            bisim_bound: None,
        }
    }

    #[test]
    fn zero_start_stays_zero() {
        let mut cfg = example5(LoopMode::SampledQuantized, 20);
        cfg.x1_0 = vec![0.0, 0.0];
        cfg.x2_0 = vec![0.0, 0.0];
        let t = simulate(&cfg).unwrap();
        assert!(t.x1.iter().chain(&t.x2).all(|x| x.iter().all(|v| *v == 0.0)));
        assert!(t.u1.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn signal_algebra_and_grids() {
        let t = simulate(&example5(LoopMode::Symbolic { eta: 0.1, epsilon: 0.25 }, 60)).unwrap();
        for k in 0..60 {
            for i in 0..2 {
                assert_eq!(t.y2_tilde[k][i] + t.u1[k][i], 0.0);
                assert_eq!(t.u2_tilde[k][i] - t.y1[k][i], 0.0);
                assert_eq!(quantize(&[t.u2[k][i]], 0.01).unwrap()[0], t.u2[k][i]);
                assert_eq!(quantize(&[t.y2_tilde[k][i]], 0.01).unwrap()[0], t.y2_tilde[k][i]);
            }
            assert_eq!(quantize_nearest(&t.x2[k], 0.1).unwrap(), t.x2[k]);
        }
    }

    #[test]
    fn rejects_plant_feedthrough() {
        let mut cfg = example5(LoopMode::SampledQuantized, 5);
        cfg.plant = example1_controller().into();
        assert!(matches!(simulate(&cfg), Err(Error::WellPosedness(_))));
    }

    #[test]
    fn fine_grid_matches_sampled_loop() {
        let a = simulate(&example5(LoopMode::SampledQuantized, 100)).unwrap();
        let b = simulate(&example5(LoopMode::Symbolic { eta: 1e-9, epsilon: 0.25 }, 100)).unwrap();
        for k in 0..=100 {
            for (p, q) in a.stacked_state(k).iter().zip(&b.stacked_state(k)) {
                assert!((p - q).abs() <= 1e-6, "step {k}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn shadow_disturbance_reproduces_symbolic_plant() {
        let shadow = LoopMode::DisturbanceInjected { epsilon: 0.25, lipschitz: 0.5, source: DisturbanceSource::ShadowSymbolic { eta: 0.1 } };
        let d = simulate(&example5(shadow, 80)).unwrap();
        let s = simulate(&example5(LoopMode::Symbolic { eta: 0.1, epsilon: 0.25 }, 80)).unwrap();
        assert_eq!(d.x1, s.x1);
        assert_eq!(d.x2_shadow, s.x2);
    }

    #[test]
    fn audit_levels() {
        let report = |d1: f64, d2: f64| BoundReport { eta1: 1.0, eta2: 1.0, level_d1: d1, level_d2: d2, constants: BTreeMap::new(), storage: Matrix::identity(1) };
        let a = ultimate_bound_audit(&[0.0; 5], &report(0.0, 0.0));
        assert!(a.global_ok && a.post_entry_ok && a.entry_index == Some(0));
        let a = ultimate_bound_audit(&[3.0, 2.0, 0.5, 1.5, 0.4, 0.3], &report(3.0, 1.0));
        assert_eq!((a.first_entry, a.entry_index), (Some(2), Some(4)));
        assert!(a.global_ok && !a.post_entry_ok);
        let a = ultimate_bound_audit(&[3.0, 2.0, 1.5], &report(2.5, 1.0));
        assert!(!a.global_ok && !a.post_entry_ok);
    }

    #[test]
    fn csv_round_trip() {
        let mut cfg = example5(LoopMode::SampledQuantized, 7);
        cfg.storage = Some(QuadraticStorage::scaled_identity(4, 0.5).unwrap());
        let t = simulate(&cfg).unwrap();
        let csv = trajectory_csv(&t);
        assert!(csv.starts_with("k,x1_1,x1_2,x2_1,x2_2,u1_1,u1_2,u2tilde_1,u2tilde_2,u2_1,u2_2,y1_1,y1_2,y2_1,y2_2,y2tilde_1,y2tilde_2,V\n"));
        let back = parse_trajectory_csv(&csv).unwrap();
        assert_eq!(back.x1, t.x1);
        assert_eq!(back.u2, t.u2);
        assert_eq!(back.v, t.v);
        assert_eq!(csv, trajectory_csv(&simulate(&cfg).unwrap()));
    }

    #[test]
    fn sweep_single_matches_direct() {
        let cfg = example5(LoopMode::Symbolic { eta: 0.05, epsilon: 0.25 }, 90);
        let sweep = eta_sweep(&cfg, &[0.05]).unwrap();
        let direct = ultimate_sup_norms(&simulate(&cfg).unwrap());
        assert_eq!(sweep[0].ultimate_sup, direct.0);
    }

    #[test]
    fn monotone_sweep_check() {
        let e = |eta, sup| EtaSweepEntry { eta, ultimate_sup: sup, ultimate_sup_x1: 0.0, ultimate_sup_x2: 0.0 };
        assert!(sweep_is_monotone(&[e(0.01, 0.1), e(0.1, 0.5), e(0.05, 0.2)], 0.05));
        assert!(sweep_is_monotone(&[e(0.1, 0.5), e(0.05, 0.52)], 0.05));
        assert!(!sweep_is_monotone(&[e(0.1, 0.5), e(0.05, 0.6)], 0.05));
    }
}
