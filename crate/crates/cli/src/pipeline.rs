//! Analyses shared by the commands: index degradation, detectability,
//! closed-loop bounds and the loop simulation they refer to.

use passquant::abstraction::{lipschitz_output_bound, lti_delta_iss, DeltaIssBound};
use passquant::bounds::{margin_check, symbolic_bounds, thm4_bounds, BoundReport, LoopBoundInputs, LoopIndices, MarginCertificate};
use passquant::detectability::{
    check_sd_certificate, loop_sd_certificate, lti_sd_certificate, lti_sd_certificate_at, sd_falsify, FalsifyBox, LoopVariant,
    SdCertificate,
};
use passquant::linalg::max_eig;
use passquant::passivity::{
    compose_feedback, choose_nu_hat, degrade_quantization, degrade_sampling, symbolic_quant_bias, verify_gain_assumption,
    verify_lti_passivity, verify_lti_passivity_rounded, GainCertificate, IndexSet, LoopIndexSet, LtiForm, QuadraticStorage,
};
use passquant::sim::{reference_sup_norm, simulate, DisturbanceSource, LoopConfig, LoopMode, Reference};
use passquant::systems::{discretize_exact, LtiModel, SampledModel, SystemModel};
use passquant::Matrix;

use crate::config::{AnalysisConfig, IndexClaim, Route, SimulationMode, SubsystemConfig};
use crate::error::{CliError, CliResult};
use crate::report::Report;

/// Indices of one subsystem before and after implementation.
#[derive(Debug, Clone)]
pub struct PassivityAnalysis {
    pub stated: IndexSet,
    /// Sampled indices `(ν′, ρ′)` with bias weight `w`.
    pub sampled: IndexSet,
    /// Sampled and quantized indices `(ν̃, ρ̃, δ̃)` with the same `w`.
    pub quantized: Option<IndexSet>,
    pub sampled_storage: Option<QuadraticStorage>,
    pub m_beta: Option<Matrix>,
}

fn lmi_check(report: &mut Report, name: &str, form: LtiForm<'_>, storage: &QuadraticStorage, nu: f64, rho: f64, decimals: Option<[u32; 2]>) -> CliResult<()> {
    match decimals {
        Some([dn, dr]) => {
            let v = verify_lti_passivity_rounded(form, storage, nu, rho, dn, dr)?;
            report.check(
                name,
                v.rounded.pass,
                format!(
                    "max eig {:.3e} at ({:.6}, {:.6}); {:.3e} at the quoted values",
                    v.rounded.max_eig, v.nu_checked, v.rho_checked, v.strict.max_eig
                ),
            );
        }
        None => {
            let v = verify_lti_passivity(form, storage, nu, rho)?;
            report.check(name, v.pass, format!("max eig {:.3e}", v.max_eig));
        }
    }
    Ok(())
}

fn sampled_claim(report: &mut Report, label: &str, lti: &LtiModel, tau: f64, claim: &IndexClaim) -> CliResult<()> {
    let storage = QuadraticStorage::new(claim.storage.clone())?;
    let disc = discretize_exact(lti, tau)?;
    lmi_check(report, &format!("{label} sampled LMI ({}, {})", claim.nu, claim.rho), LtiForm::Discrete(&disc), &storage, claim.nu, claim.rho, claim.decimals)
}

/// Verifies the stated indices where possible and degrades them.
pub fn analyze_passivity(
    report: &mut Report,
    label: &str,
    sub: &SubsystemConfig,
    model: &SystemModel,
    cfg: &AnalysisConfig,
    quantize: bool,
) -> CliResult<PassivityAnalysis> {
    let pc = sub.passivity.as_ref().ok_or_else(|| CliError::Config(format!("'{label}' needs a 'passivity' section")))?;
    let tau = cfg.sampling.tau;
    let lambdas = cfg.lambdas.choices();
    lambdas.validate()?;
    let storage = pc.storage.clone().map(QuadraticStorage::new).transpose()?;
    let lti = model.as_lti();

    if let (Some(lti), Some(st)) = (lti, &storage) {
        match pc.route {
            Route::Continuous => lmi_check(report, &format!("{label} LMI ({}, {})", pc.nu, pc.rho), LtiForm::Continuous(lti), st, pc.nu, pc.rho, pc.decimals)?,
            Route::Discrete => {
                let disc = discretize_exact(lti, tau)?;
                lmi_check(report, &format!("{label} LMI ({}, {})", pc.nu, pc.rho), LtiForm::Discrete(&disc), st, pc.nu, pc.rho, pc.decimals)?
            }
        }
    }
    if let (Some(lti), Some(claim)) = (lti, &pc.sampled_check) {
        sampled_claim(report, label, lti, tau, claim)?;
    }

    let stated = IndexSet::ifofp(pc.nu, pc.rho);
    let (sampled, sampled_storage) = match pc.route {
        Route::Continuous => {
            let gamma = pc.gamma.ok_or_else(|| CliError::Config(format!("'{label}.passivity' needs 'gamma' on the continuous route")))?;
            if let (Some(lti), Some(mb)) = (lti, &pc.beta) {
                let v = verify_gain_assumption(lti, &GainCertificate::new(gamma, mb.clone())?)?;
                report.check(format!("{label} gain certificate (gamma {gamma})"), v.pass, format!("max eig {:.3e}", v.max_eig));
            }
            (degrade_sampling(pc.nu, pc.rho, gamma, tau, lambdas.l1)?, storage.map(|s| QuadraticStorage { p: s.p.scale(1.0 / tau) }))
        }
        Route::Discrete => (stated, storage),
    };
    let quantized = if quantize {
        let q = cfg.quantization()?;
        let mut t = degrade_quantization(sampled.nu, sampled.rho, q.mu1, q.mu2, model.m(), &lambdas)?;
        t.w = sampled.w;
        Some(t)
    } else {
        None
    };

    let s = report.section(format!("{label} indices"));
    s.put("route", pc.route).put("nu", pc.nu).put("rho", pc.rho).put("nu_sampled", sampled.nu).put("rho_sampled", sampled.rho).put("w", sampled.w);
    if let Some(mb) = &pc.beta {
        s.put("w_beta", sampled.w * max_eig(mb)?);
    }
    if let Some(q) = &quantized {
        s.put("nu_quantized", q.nu).put("rho_quantized", q.rho).put("delta_quantized", q.delta);
    }
    Ok(PassivityAnalysis { stated, sampled, quantized, sampled_storage, m_beta: pc.beta.clone() })
}

#[derive(Debug, Clone)]
pub struct SdAnalysis {
    pub cert: SdCertificate,
    pub valid: bool,
}

/// Builds or checks a detectability certificate on the sampled model.
pub fn analyze_sd(report: &mut Report, label: &str, sub: &SubsystemConfig, model: &SystemModel, tau: f64, seed: u64) -> CliResult<SdAnalysis> {
    let dc = sub.detectability.as_ref().ok_or_else(|| CliError::Config(format!("'{label}' needs a 'detectability' section")))?;
    let disc = model.as_lti().map(|l| discretize_exact(l, tau)).transpose()?;
    let mut valid = true;
    let cert = match (&dc.p, &disc) {
        (Some(p), _) => SdCertificate::new(dc.window, dc.theta.unwrap_or(0.0), p.clone())?,
        (None, Some(d)) => match dc.theta {
            Some(theta) => lti_sd_certificate_at(d, dc.window, theta)?,
            None => lti_sd_certificate(d, dc.window)?,
        },
        (None, None) => return Err(CliError::Config(format!("'{label}.detectability' needs 'p' for a nonlinear model"))),
    };
    if let Some(d) = &disc {
        let v = check_sd_certificate(d, &cert)?;
        report.check(format!("{label} detectability (exact)"), v.pass, format!("min eig {:.3e}", v.min_eig));
        valid &= v.pass;
    }
    if dc.p.is_some() && dc.trials > 0 {
        let sampled = SampledModel::new(model, tau)?;
        let f = sd_falsify(&sampled, &cert, dc.trials, FalsifyBox::default(), seed)?;
        let detail = match &f.counterexample {
            Some(c) => format!("counterexample with ratio {:.4} at x0 = {:?}", c.ratio, c.x0),
            None => format!("worst ratio {:.6} over {} trials", f.worst_ratio, f.trials),
        };
        report.check(format!("{label} detectability (falsifier)"), f.counterexample.is_none(), detail);
        valid &= f.counterexample.is_none();
    }
    report
        .section(format!("{label} detectability"))
        .put("window", cert.window())
        .put("theta", cert.theta())
        .put("mp", cert.mp().data());
    Ok(SdAnalysis { cert, valid })
}

/// Whether the loop references are identically zero.
pub fn zero_references(cfg: &AnalysisConfig) -> bool {
    let zero = |r: &Reference| match r {
        Reference::Zero => true,
        Reference::Constant(v) => v.iter().all(|x| *x == 0.0),
        Reference::Sequence(s) => s.iter().flatten().all(|x| *x == 0.0),
    };
    zero(&cfg.references.r1) && zero(&cfg.references.r2)
}

pub fn loop_variant(cfg: &AnalysisConfig) -> LoopVariant {
    cfg.references.variant.unwrap_or(if zero_references(cfg) { LoopVariant::ZeroReference } else { LoopVariant::General })
}

/// Controller bound used by the symbolic loop.
pub fn delta_iss_bound(cfg: &AnalysisConfig, controller: &SystemModel) -> CliResult<DeltaIssBound> {
    if let Some(b) = cfg.symbolic.as_ref().and_then(|s| s.delta_iss) {
        return Ok(b);
    }
    match controller.as_lti() {
        Some(l) => Ok(lti_delta_iss(l.a(), l.b())?),
        None => Err(CliError::Config("'symbolic.delta_iss' is required for a nonlinear controller".into())),
    }
}

pub fn controller_lipschitz(cfg: &AnalysisConfig, controller: &SystemModel) -> CliResult<f64> {
    Ok(lipschitz_output_bound(controller, cfg.controller()?.lipschitz)?)
}

/// Simulation set-up at grid pitch `eta` (ignored by the sampled mode).
pub fn loop_config(cfg: &AnalysisConfig, eta: Option<f64>, seed: u64, storage: Option<QuadraticStorage>) -> CliResult<LoopConfig> {
    let sim = cfg.simulation()?;
    let plant = cfg.plant()?.model.build()?;
    let controller = cfg.controller()?.model.build()?;
    let q = cfg.quantization()?;
    let symbolic = || -> CliResult<(f64, f64)> {
        let s = cfg.symbolic()?;
        let eta = eta.or(s.eta.first().copied()).ok_or_else(|| CliError::Config("'symbolic.eta' is empty".into()))?;
        Ok((eta, s.epsilon))
    };
    let (mode, bisim_bound) = match sim.mode {
        SimulationMode::SampledQuantized => (LoopMode::SampledQuantized, None),
        SimulationMode::Symbolic => {
            let (eta, epsilon) = symbolic()?;
            (LoopMode::Symbolic { eta, epsilon }, Some(delta_iss_bound(cfg, &controller)?))
        }
        SimulationMode::ShadowDisturbance => {
            let (eta, epsilon) = symbolic()?;
            let lipschitz = controller_lipschitz(cfg, &controller)?;
            (LoopMode::DisturbanceInjected { epsilon, lipschitz, source: DisturbanceSource::ShadowSymbolic { eta } }, None)
        }
        SimulationMode::RandomDisturbance => {
            let (_, epsilon) = symbolic()?;
            let lipschitz = controller_lipschitz(cfg, &controller)?;
            let seed = sim.seed.unwrap_or(seed);
            (LoopMode::DisturbanceInjected { epsilon, lipschitz, source: DisturbanceSource::Random { seed } }, None)
        }
    };
    Ok(LoopConfig {
        plant,
        controller,
        mode,
        tau: cfg.sampling.tau,
        mu1: q.mu1,
        mu2: q.mu2,
        r1: cfg.references.r1.clone(),
        r2: cfg.references.r2.clone(),
        horizon: sim.horizon,
        x1_0: sim.x1_0.clone(),
        x2_0: sim.x2_0.clone(),
        x2s_0: sim.x2s_0.clone(),
        storage,
        bisim_bound,
    })
}

/// Everything the closed-loop bound rests on.
#[derive(Debug, Clone)]
pub struct LoopAnalysis {
    pub plant: PassivityAnalysis,
    pub controller: PassivityAnalysis,
    pub composed: Option<LoopIndexSet>,
    pub indices: LoopIndices,
    pub cert: SdCertificate,
    pub storage: QuadraticStorage,
    pub bound: BoundReport,
    pub margin: Option<MarginCertificate>,
    /// All hypotheses of the bound verified.
    pub certified: bool,
}

impl LoopAnalysis {
    /// Bound report whose `D1` level uses the storage values of the first
    /// detectability window of a particular run.
    pub fn bound_for_run(&self, v: &[f64]) -> BoundReport {
        let mut b = self.bound.clone();
        let n = self.cert.window() + 1;
        b.level_d1 = v.iter().take(n).copied().fold(b.level_d2, f64::max);
        b
    }
}

/// Composed indices of the loop for the configured reference variant.
pub fn loop_indices(
    report: &mut Report,
    cfg: &AnalysisConfig,
    plant: &PassivityAnalysis,
    ctrl_quantized: &IndexSet,
) -> CliResult<(LoopIndices, Option<LoopIndexSet>, bool)> {
    let variant = loop_variant(cfg);
    let i1 = plant.sampled;
    let nu_hat = match cfg.lambdas.nu_hat {
        Some(v) => v,
        None => choose_nu_hat(&i1, ctrl_quantized)?,
    };
    let composed = compose_feedback(&i1, ctrl_quantized, nu_hat).ok();
    let plant_output = ctrl_quantized.nu + i1.rho;
    let controller_output = i1.nu + ctrl_quantized.rho;
    let s = report.section("loop indices");
    s.put("variant", variant).put("cross_plant_output", plant_output).put("cross_controller_output", controller_output);
    if let Some(c) = &composed {
        s.put("nu_hat", c.nu_hat).put("rho_hat", c.rho_hat).put("delta_hat", c.delta_hat).put("w1", c.w1).put("w2", c.w2);
    }
    let (indices, ok) = match variant {
        LoopVariant::General => {
            let c = composed.ok_or_else(|| CliError::Config(format!("nu_hat = {nu_hat} must lie below both feedforward indices")))?;
            let ok = c.rho_hat > 0.0;
            report.check("composed rho_hat positive", ok, format!("rho_hat = {:.6}", c.rho_hat));
            (LoopIndices::General { nu_hat: c.nu_hat, rho_hat: c.rho_hat, lambda: cfg.lambdas.lambda }, ok)
        }
        LoopVariant::ZeroReference => {
            let ok = plant_output > 0.0 && controller_output > 0.0;
            report.check("cross indices positive", ok, format!("{plant_output:.6} and {controller_output:.6}"));
            (LoopIndices::ZeroReference { plant_output, controller_output }, ok)
        }
    };
    Ok((indices, composed, ok))
}

/// Full closed-loop analysis: indices, detectability, bound levels and
/// the margin condition. Failed hypotheses become failed checks.
pub fn analyze_loop(report: &mut Report, cfg: &AnalysisConfig, seed: u64) -> CliResult<LoopAnalysis> {
    let plant_cfg = cfg.plant()?;
    let ctrl_cfg = cfg.controller()?;
    let plant_model = plant_cfg.model.build()?;
    let ctrl_model = ctrl_cfg.model.build()?;
    let q = cfg.quantization()?;
    let sim = cfg.simulation()?;
    let tau = cfg.sampling.tau;
    let m = ctrl_model.m();

    let plant = analyze_passivity(report, "plant", plant_cfg, &plant_model, cfg, false)?;
    let controller = analyze_passivity(report, "controller", ctrl_cfg, &ctrl_model, cfg, true)?;
    let symbolic_mode = !matches!(sim.mode, SimulationMode::SampledQuantized);
    let mut ctrl_q = controller.quantized.expect("quantized above");
    let lipschitz_eps = if symbolic_mode {
        let l = controller_lipschitz(cfg, &ctrl_model)?;
        let eps = cfg.symbolic()?.epsilon;
        ctrl_q.delta = symbolic_quant_bias(controller.sampled.nu, controller.sampled.rho, l, eps, q.mu1, q.mu2, m, &cfg.lambdas.choices())?;
        report.section("symbolic").put("lipschitz", l).put("epsilon", eps).put("delta_symbolic", ctrl_q.delta);
        Some((l, eps))
    } else {
        None
    };
    let (indices, composed, indices_ok) = loop_indices(report, cfg, &plant, &ctrl_q)?;

    let sd1 = analyze_sd(report, "plant", plant_cfg, &plant_model, tau, seed)?;
    let sd2 = analyze_sd(report, "controller", ctrl_cfg, &ctrl_model, tau, seed)?;
    let cert = loop_sd_certificate(&sd1.cert, &sd2.cert, indices.variant())?;

    let storage = match &cfg.storage {
        Some(s) => QuadraticStorage::new(s.p.clone())?,
        None => {
            let missing = |l: &str| CliError::Config(format!("'{l}.passivity.storage' is required for the loop storage"));
            let p1 = plant.sampled_storage.as_ref().ok_or_else(|| missing("plant"))?;
            let p2 = controller.sampled_storage.as_ref().ok_or_else(|| missing("controller"))?;
            QuadraticStorage::new(Matrix::block_diag(&[&p1.p, &p2.p]))?
        }
    };

    let prefix_len = cert.window() + 1;
    let mut prefix_cfg = loop_config(cfg, None, seed, Some(storage.clone()))?;
    prefix_cfg.horizon = prefix_len;
    let v_first: Vec<f64> = simulate(&prefix_cfg)?.v.into_iter().take(prefix_len).collect();
    let r_norm = reference_sup_norm(&cfg.references.r1, &cfg.references.r2, m, sim.horizon);

    let inputs = LoopBoundInputs {
        indices,
        delta_tilde2: ctrl_q.delta,
        cert: &cert,
        theta2: sd2.cert.theta(),
        window2: sd2.cert.window(),
        mu1: q.mu1,
        mu2: q.mu2,
        m,
        storage: &storage,
        r_norm,
        d3: cfg.lambdas.d3,
        v_first: &v_first,
    };
    let bound = match lipschitz_eps {
        Some((l, eps)) => symbolic_bounds(&inputs, l, eps)?,
        None => thm4_bounds(&inputs)?,
    };
    let s = report.section("bound");
    s.put("eta1", bound.eta1).put("eta2", bound.eta2).put("level_d1", bound.level_d1).put("level_d2", bound.level_d2).put("r_norm", r_norm);
    for (k, v) in &bound.constants {
        s.put(k.clone(), *v);
    }

    let n1 = plant_model.n();
    let n2 = ctrl_model.n();
    let beta = |a: &PassivityAnalysis, n: usize| -> Option<Matrix> {
        if a.sampled.w == 0.0 {
            Some(a.m_beta.clone().unwrap_or_else(|| Matrix::zeros(n, n)))
        } else {
            a.m_beta.clone()
        }
    };
    let margin = match (beta(&plant, n1), beta(&controller, n2)) {
        (Some(b1), Some(b2)) => {
            let mc = margin_check(bound.eta2, cert.mp(), plant.sampled.w, &b1, controller.sampled.w, &b2)?;
            report.check("margin", mc.pass, format!("min eig {:.4e}", mc.min_eig));
            Some(mc)
        }
        _ => {
            report.check("margin", false, "no quadratic bias certificate for a subsystem with positive bias weight");
            None
        }
    };
    let certified = indices_ok && sd1.valid && sd2.valid && margin.as_ref().is_some_and(|m| m.pass) && bound.level_d1.is_finite();
    Ok(LoopAnalysis { plant, controller, composed, indices, cert, storage, bound, margin, certified })
}
