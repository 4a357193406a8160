//! One function per subcommand, each returning a [`Report`].

use std::path::Path;

use passquant::abstraction::check_bisim_params;
use passquant::bounds::{lemma4_bounds, BoundReport};
use passquant::detectability::{compose_sd, loop_sd_certificate};
use passquant::passivity::{dissipation_audit, IoTrajectory, AUDIT_MAX_STEPS};
use passquant::sim::{
    eta_sweep_runs, parse_trajectory_csv, reference_sup_norm, simulate, sweep_entry, sweep_is_monotone, trajectory_csv,
    ultimate_bound_audit, LoopMode, Trajectory,
};
use passquant::linalg::{max_eig, norm2};

use crate::config::{AnalysisConfig, SimulationMode};
use crate::error::{CliError, CliResult};
use crate::pipeline::{analyze_loop, analyze_passivity, analyze_sd, controller_lipschitz, delta_iss_bound, loop_config, loop_indices, loop_variant, LoopAnalysis};
use crate::report::Report;

/// Relative growth tolerated between neighbouring grid pitches.
pub const SWEEP_SLACK: f64 = 0.05;

/// Dissipation audits pass below this violation.
pub const DISSIPATION_TOL: f64 = 1e-8;

pub fn cmd_degrade(cfg: &AnalysisConfig) -> CliResult<Report> {
    let mut r = Report::new("degrade");
    if cfg.plant.is_none() && cfg.controller.is_none() {
        return Err(CliError::Config("needs a 'plant' or 'controller' section".into()));
    }
    if let Some(p) = &cfg.plant {
        analyze_passivity(&mut r, "plant", p, &p.model.build()?, cfg, false)?;
    }
    if let Some(c) = &cfg.controller {
        analyze_passivity(&mut r, "controller", c, &c.model.build()?, cfg, cfg.quantization.is_some())?;
    }
    Ok(r)
}

pub fn cmd_compose(cfg: &AnalysisConfig) -> CliResult<Report> {
    let mut r = Report::new("compose");
    let (p, c) = (cfg.plant()?, cfg.controller()?);
    let plant = analyze_passivity(&mut r, "plant", p, &p.model.build()?, cfg, false)?;
    let ctrl = analyze_passivity(&mut r, "controller", c, &c.model.build()?, cfg, true)?;
    loop_indices(&mut r, cfg, &plant, &ctrl.quantized.expect("quantized above"))?;
    Ok(r)
}

pub fn cmd_sd(cfg: &AnalysisConfig, seed: u64) -> CliResult<Report> {
    let mut r = Report::new("sd");
    let tau = cfg.sampling.tau;
    let p = cfg.plant.as_ref().map(|s| analyze_sd(&mut r, "plant", s, &s.model.build()?, tau, seed)).transpose()?;
    let c = cfg.controller.as_ref().map(|s| analyze_sd(&mut r, "controller", s, &s.model.build()?, tau, seed)).transpose()?;
    match (p, c) {
        (Some(p), Some(c)) => {
            let composed = compose_sd(&p.cert, &c.cert)?;
            r.section("composed").put("window", composed.window()).put("theta", composed.theta()).put("mp", composed.mp().data());
            let looped = loop_sd_certificate(&p.cert, &c.cert, loop_variant(cfg))?;
            r.section("quantized loop")
                .put("variant", loop_variant(cfg))
                .put("window", looped.window())
                .put("theta", looped.theta())
                .put("mp", looped.mp().data());
        }
        (None, None) => return Err(CliError::Config("needs a 'plant' or 'controller' section".into())),
        _ => {}
    }
    Ok(r)
}

fn single_system_bound(r: &mut Report, cfg: &AnalysisConfig, seed: u64) -> CliResult<()> {
    let p = cfg.plant()?;
    let model = p.model.build()?;
    let pa = analyze_passivity(r, "plant", p, &model, cfg, false)?;
    if pa.sampled.w != 0.0 {
        return Err(CliError::Config("a single-system bound needs discrete-route indices (no initial bias)".into()));
    }
    let sd = analyze_sd(r, "plant", p, &model, cfg.sampling.tau, seed)?;
    let storage = pa.sampled_storage.ok_or_else(|| CliError::Config("'plant.passivity.storage' is required".into()))?;
    let horizon = cfg.simulation.as_ref().map_or(1, |s| s.horizon);
    let u_norm = reference_sup_norm(&cfg.references.r1, &passquant::sim::Reference::Zero, model.m(), horizon);
    let x0 = cfg.simulation.as_ref().map_or_else(|| vec![0.0; model.n()], |s| s.x1_0.clone());
    let lambda = cfg.lambdas.lambda.unwrap_or(pa.sampled.rho / 2.0);
    let p_x0 = sd.cert.p(&x0);
    let first = lemma4_bounds(&pa.sampled, &sd.cert, &storage, u_norm, lambda, 1.0, p_x0)?;
    let c5 = cfg.lambdas.c5.unwrap_or(1e-3 * (first.constant("c2").unwrap_or(0.0) + 1.0));
    let b = lemma4_bounds(&pa.sampled, &sd.cert, &storage, u_norm, lambda, c5, p_x0)?;
    put_bound(r, &b, u_norm);
    Ok(())
}

fn put_bound(r: &mut Report, b: &BoundReport, input_norm: f64) {
    let s = r.section("bound");
    s.put("eta1", b.eta1).put("eta2", b.eta2).put("level_d1", b.level_d1).put("level_d2", b.level_d2).put("input_norm", input_norm);
    for (k, v) in &b.constants {
        s.put(k.clone(), *v);
    }
}

pub fn cmd_bound(cfg: &AnalysisConfig, seed: u64) -> CliResult<Report> {
    let mut r = Report::new("bound");
    if cfg.controller.is_none() {
        single_system_bound(&mut r, cfg, seed)?;
        return Ok(r);
    }
    let la = analyze_loop(&mut r, cfg, seed)?;
    r.section("summary").put("certified", la.certified);
    Ok(r)
}

pub fn cmd_abstract_check(cfg: &AnalysisConfig) -> CliResult<Report> {
    let mut r = Report::new("abstract-check");
    let ctrl = cfg.controller()?.model.build()?;
    let sym = cfg.symbolic()?;
    let q = cfg.quantization()?;
    let bound = delta_iss_bound(cfg, &ctrl)?;
    let l = controller_lipschitz(cfg, &ctrl)?;
    let rt_m = (ctrl.m() as f64).sqrt();
    r.section("incremental stability").put("c", bound.c).put("a", bound.a).put("kg", bound.kg);
    r.section("output error")
        .put("lipschitz", l)
        .put("disturbance_bound", l * sym.epsilon + 2.0 * rt_m * q.mu2)
        .put("symbolic_output_radius", l * sym.epsilon + 3.0 * rt_m * q.mu2);
    let s = r.section("grid pitches");
    let mut results = Vec::new();
    for &eta in &sym.eta {
        let c = check_bisim_params(&bound, sym.epsilon, cfg.sampling.tau, q.mu1, eta)?;
        s.put(format!("slack_eta_{eta}"), c.slack);
        results.push((eta, c));
    }
    for (eta, c) in results {
        r.check(format!("bisimulation eta {eta}"), c.pass, format!("slack {:.4}", c.slack));
    }
    Ok(r)
}

/// Bound with `level_D1` recomputed from the first storage values of a
/// particular run.
fn audit_run(r: &mut Report, label: &str, la: &LoopAnalysis, v: &[f64]) {
    let a = ultimate_bound_audit(v, &la.bound_for_run(v));
    r.section(format!("audit {label}"))
        .put("max_v", a.max_v)
        .put("entry_index", a.entry_index)
        .put("first_entry", a.first_entry)
        .put("max_v_after_entry", a.max_v_after_entry);
    r.check(format!("{label} within D1"), a.global_ok, format!("max V {:.6}", a.max_v));
    r.check(format!("{label} settles in D2"), a.post_entry_ok, format!("entry {:?}", a.entry_index));
}

fn csv_name(eta: Option<f64>) -> String {
    match eta {
        Some(e) => format!("trajectory_eta_{e}.csv"),
        None => "trajectory.csv".into(),
    }
}

/// Loop analysis for simulations, recorded in a scratch report so that its
/// hypothesis checks do not count against the simulation.
fn quiet_loop_analysis(cfg: &AnalysisConfig, seed: u64) -> (Option<LoopAnalysis>, String) {
    let mut scratch = Report::new("bound");
    match analyze_loop(&mut scratch, cfg, seed) {
        Ok(la) if la.certified => (Some(la), "certified".into()),
        Ok(la) => {
            let failed: Vec<String> = scratch.failures().iter().map(|c| c.name.clone()).collect();
            (Some(la), format!("not certified ({})", failed.join(", ")))
        }
        Err(e) => (None, format!("unavailable: {e}")),
    }
}

pub fn cmd_simulate(cfg: &AnalysisConfig, out: Option<&Path>, seed: u64) -> CliResult<Report> {
    let mut r = Report::new("simulate");
    let (la, status) = quiet_loop_analysis(cfg, seed);
    r.section("bound").put("status", &status);
    let storage = la.as_ref().map(|l| l.storage.clone());
    let base = loop_config(cfg, None, seed, storage)?;
    let sim = cfg.simulation()?;
    let runs: Vec<(Option<f64>, Trajectory)> = match (sim.mode, &cfg.symbolic) {
        (SimulationMode::Symbolic, Some(s)) => {
            let trajs = eta_sweep_runs(&base, &s.eta)?;
            s.eta.iter().copied().map(Some).zip(trajs).collect()
        }
        _ => vec![(None, simulate(&base)?)],
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (eta, t) in &runs {
            let path = dir.join(csv_name(*eta));
            std::fs::write(&path, trajectory_csv(t)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }

    let mut entries = Vec::new();
    for (eta, t) in &runs {
        let label = eta.map_or_else(|| "run".to_string(), |e| format!("eta {e}"));
        let entry = sweep_entry(eta.unwrap_or(0.0), t);
        let last = t.horizon();
        let s = r.section(label.clone());
        s.put("steps", last)
            .put("final_x1_norm", norm2(&t.x1[last]))
            .put("final_x2_norm", norm2(&t.x2[last]))
            .put("ultimate_sup", entry.ultimate_sup)
            .put("ultimate_sup_x1", entry.ultimate_sup_x1)
            .put("ultimate_sup_x2", entry.ultimate_sup_x2);
        if let LoopMode::DisturbanceInjected { .. } = base.mode {
            let wmax = t.w.iter().map(|w| norm2(w)).fold(0.0, f64::max);
            s.put("max_disturbance", wmax).put("disturbance_bound", base.disturbance_bound());
        }
        if let Some(dir) = out {
            s.put("csv", dir.join(csv_name(*eta)).display().to_string());
        }
        if let Some(la) = la.as_ref().filter(|l| l.certified) {
            audit_run(&mut r, &label, la, &t.v);
        }
        entries.push(entry);
    }
    if runs.len() > 1 {
        r.check(
            "ultimate bound shrinks with the grid pitch",
            sweep_is_monotone(&entries, SWEEP_SLACK),
            entries.iter().map(|e| format!("{}: {:.4}", e.eta, e.ultimate_sup)).collect::<Vec<_>>().join(", "),
        );
    }
    if let LoopMode::DisturbanceInjected { .. } = base.mode {
        let bound = base.disturbance_bound().unwrap_or(0.0);
        let ok = runs.iter().all(|(_, t)| t.w.iter().all(|w| norm2(w) <= bound));
        r.check("disturbance within bound", ok, format!("bound {bound:.6}"));
    }
    Ok(r)
}

pub fn cmd_audit(cfg: &AnalysisConfig, trajectory: &Path, seed: u64) -> CliResult<Report> {
    let mut r = Report::new("audit");
    let text = std::fs::read_to_string(trajectory).map_err(|e| CliError::Io(format!("{}: {e}", trajectory.display())))?;
    let t = parse_trajectory_csv(&text)?;
    let k = AUDIT_MAX_STEPS.min(t.horizon());
    r.section("trajectory").put("steps", t.horizon()).put("audited_steps", k);

    let p = cfg.plant()?;
    let plant_model = p.model.build()?;
    let plant = analyze_passivity(&mut r, "plant", p, &plant_model, cfg, false)?;
    let symbolic = cfg.simulation.as_ref().is_some_and(|s| s.mode != SimulationMode::SampledQuantized);
    let ctrl = match &cfg.controller {
        Some(c) if cfg.quantization.is_some() => Some(analyze_passivity(&mut r, "controller", c, &c.model.build()?, cfg, true)?),
        _ => None,
    };

    let mut audit = |label: &str, x: &[Vec<f64>], u: &[Vec<f64>], y: &[Vec<f64>], a: &crate::pipeline::PassivityAnalysis, idx| -> CliResult<()> {
        let Some(storage) = &a.sampled_storage else {
            r.section(format!("{label} dissipation")).put("status", "skipped: no storage matrix");
            return Ok(());
        };
        let mb = match (&a.m_beta, a.sampled.w) {
            (Some(m), _) => m.clone(),
            (None, 0.0) => passquant::Matrix::zeros(storage.p.rows(), storage.p.rows()),
            _ => {
                r.section(format!("{label} dissipation")).put("status", "skipped: positive bias weight without a quadratic bias");
                return Ok(());
            }
        };
        let io = IoTrajectory { x: x[..=k].to_vec(), u: u[..k].to_vec(), y: y[..k].to_vec() };
        let viol = dissipation_audit(&io, |z| storage.value(z), idx, |z| mb.quad_form(z).unwrap_or(f64::NAN))?;
        r.section(format!("{label} dissipation")).put("max_violation", viol).put("beta_max_eig", max_eig(&mb)?);
        r.check(format!("{label} dissipation"), viol <= DISSIPATION_TOL, format!("max violation {viol:.3e}"));
        Ok(())
    };
    audit("plant", &t.x1, &t.u1, &t.y1, &plant, &plant.sampled)?;
    match &ctrl {
        Some(c) if !symbolic => {
            let q = c.quantized.expect("quantized above");
            audit("controller", &t.x2, &t.u2_tilde, &t.y2_tilde, c, &q)?;
        }
        Some(_) => {
            r.section("controller dissipation").put("status", "skipped: controller output carries an abstraction error");
        }
        None => {}
    }

    if !t.v.is_empty() && cfg.controller.is_some() {
        let (la, status) = quiet_loop_analysis(cfg, seed);
        r.section("bound").put("status", &status);
        if let Some(la) = la.as_ref().filter(|l| l.certified) {
            audit_run(&mut r, "trajectory", la, &t.v);
        }
    }
    Ok(r)
}
