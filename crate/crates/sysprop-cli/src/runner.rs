//! Experiment execution and file outputs.

use std::path::Path;

use sysprop::config::{ConeMethod, EstimatorConfig, GainMethod, PassivityMethod};
use sysprop::conic::estimate_cone;
use sysprop::error::Error;
use sysprop::gain::estimate_gain;
use sysprop::passivity::estimate_passivity;
use sysprop::plantfile::build_plant;
use sysprop::probe::{NoiseModel, Plant, ProbeSession};
use sysprop::spectra;
use sysprop::trace::EstimateTrace;

use crate::config::{EstimatorSpec, ExperimentConfig, NoiseKindSpec, NoiseSpec, Property};

/// Process exit codes: 2 config, 3 budget, 4 divergence, 1 anything else.
pub enum RunError {
    Config(String),
    Budget(String),
    Divergence(String),
    Other(String),
}

impl RunError {
    pub fn code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Budget(_) => 3,
            RunError::Divergence(_) => 4,
            RunError::Other(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m)
            | RunError::Budget(m)
            | RunError::Divergence(m)
            | RunError::Other(m) => m,
        }
    }
}

fn classify(e: &Error) -> RunError {
    match e.root() {
        Error::BudgetExhausted { .. } => RunError::Budget(e.root().to_string()),
        Error::Divergence { .. } => RunError::Divergence(e.root().to_string()),
        other => RunError::Other(other.to_string()),
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn noise_model(spec: &NoiseSpec, master_seed: u64) -> Result<NoiseModel> {
    let seed = spec.seed.unwrap_or(master_seed);
    let model = match spec.kind {
        NoiseKindSpec::None => NoiseModel::none(),
        NoiseKindSpec::Additive => {
            NoiseModel::additive(spec.sigma, seed).map_err(|e| RunError::Config(e.to_string()))?
        }
        NoiseKindSpec::Multiplicative => NoiseModel::multiplicative(spec.epsilon_bar, seed)
            .map_err(|e| RunError::Config(e.to_string()))?,
    };
    Ok(model)
}

fn session(plant: &Plant, cfg: &ExperimentConfig) -> Result<ProbeSession> {
    let noise = noise_model(&cfg.noise, cfg.estimator.seed)?;
    ProbeSession::new(plant.clone(), noise, cfg.estimator.budget)
        .map_err(|e| RunError::Config(e.to_string()))
}

fn fill<M: Copy>(spec: &EstimatorSpec, method: M) -> EstimatorConfig<M> {
    let mut c = EstimatorConfig::with_method(method, spec.alpha, spec.u0.clone());
    c.rel_tol = spec.rel_tol;
    c.grad_tol = spec.grad_tol;
    c.patience = spec.patience;
    c.max_iters = spec.max_iters;
    c.flow_time = spec.flow_time;
    c.with_nu = spec.with_nu;
    c
}

fn gain_method(name: &str) -> GainMethod {
    match name {
        "power" => GainMethod::Power,
        "pg_power" => GainMethod::PgPower,
        "gradient_ascent" => GainMethod::GradientAscent,
        "gradient_ascent_linesearch" => GainMethod::GradientAscentLineSearch,
        "continuous_flow" => GainMethod::ContinuousFlow,
        _ => unreachable!("validated by config"),
    }
}

fn passivity_method(name: &str) -> PassivityMethod {
    match name {
        "gradient_descent" => PassivityMethod::GradientDescent,
        "gradient_descent_linesearch" => PassivityMethod::GradientDescentLineSearch,
        "continuous_flow" => PassivityMethod::ContinuousFlow,
        _ => unreachable!("validated by config"),
    }
}

fn cone_method(name: &str) -> ConeMethod {
    match name {
        "arrow_hurwicz" => ConeMethod::ArrowHurwicz,
        "uzawa" => ConeMethod::Uzawa,
        "continuous_flow" => ConeMethod::ContinuousFlow,
        _ => unreachable!("validated by config"),
    }
}

/// One summary line: estimate, optional truth/relative error, samples used.
struct SummaryRow {
    property: &'static str,
    estimate: Option<f64>,
    truth: Option<f64>,
    samples: u64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rel_error(est: f64, truth: f64) -> f64 {
    // Absolute error when the truth is (numerically) zero.
    if truth.abs() > 1e-12 {
        (est - truth).abs() / truth.abs()
    } else {
        (est - truth).abs()
    }
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("property,estimate,truth,rel_error,samples\n");
    for r in rows {
        let rel = match (r.estimate, r.truth) {
            (Some(e), Some(t)) => Some(rel_error(e, t)),
            _ => None,
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.property,
            fmt_opt(r.estimate),
            fmt_opt(r.truth),
            fmt_opt(rel),
            r.samples
        ));
    }
    out
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| RunError::Other(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| RunError::Other(format!("cannot write {}: {e}", path.display())))
}

fn meta_text(cfg: &ExperimentConfig, seed_override: Option<u64>) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "artifact_version = {}\n",
        env!("CARGO_PKG_VERSION")
    ));
    if let Some(s) = seed_override {
        out.push_str(&format!("seed_override = {s}\n"));
    }
    for (k, v) in &cfg.resolved {
        // The output directory is runtime-chosen and deliberately excluded
        // so reruns into different directories stay byte-identical.
        if k == "output.dir" {
            continue;
        }
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// The `run` subcommand. Writes trace/summary/meta into `out_dir` even when
/// a run aborts on budget or the divergence guard, then reports the abort.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let plant = build_plant(&cfg.plant).map_err(|e| RunError::Config(e.to_string()))?;
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut abort: Option<RunError> = None;

    let properties: Vec<Property> = match cfg.estimator.property {
        Property::All => vec![Property::Gain, Property::Passivity, Property::Cone],
        p => vec![p],
    };
    let single = properties.len() == 1;

    for prop in properties {
        if abort.is_some() {
            break;
        }
        let trace_name = if single {
            "trace.csv".to_string()
        } else {
            match prop {
                Property::Gain => "trace_gain.csv".into(),
                Property::Passivity => "trace_passivity.csv".into(),
                Property::Cone => "trace_cone.csv".into(),
                Property::All => unreachable!(),
            }
        };
        match prop {
            Property::Gain => {
                let mut s = session(&plant, cfg)?;
                let method = gain_method(cfg.estimator.method.as_deref().unwrap_or("power"));
                let spec = fill(&cfg.estimator, method);
                let (trace_csv, estimate, samples) = match estimate_gain(&mut s, &spec) {
                    Ok(est) => (
                        est.flow
                            .as_ref()
                            .map(|f| f.to_csv())
                            .unwrap_or_else(|| est.trace.to_csv()),
                        Some(est.gamma_hat),
                        s.samples_used(),
                    ),
                    Err(Error::EstimateAborted { reason, trace }) => {
                        abort = Some(classify(&reason));
                        (
                            trace.to_csv(),
                            trace.rows().last().map(|r| r.estimate),
                            s.samples_used(),
                        )
                    }
                    Err(e) => return Err(classify(&e)),
                };
                write_file(out_dir, &trace_name, &trace_csv)?;
                let truth = cfg
                    .validate
                    .then(|| spectra::l2_gain(&plant))
                    .transpose()
                    .map_err(|e| RunError::Other(e.to_string()))?;
                rows.push(SummaryRow {
                    property: "gamma",
                    estimate,
                    truth,
                    samples,
                });
            }
            Property::Passivity => {
                let mut s = session(&plant, cfg)?;
                let method = passivity_method(
                    cfg.estimator
                        .method
                        .as_deref()
                        .unwrap_or("gradient_descent_linesearch"),
                );
                let spec = fill(&cfg.estimator, method);
                let mut nu_est: Option<f64> = None;
                let (trace_csv, estimate, nu_trace, samples) =
                    match estimate_passivity(&mut s, &spec) {
                        Ok(est) => {
                            nu_est = est.nu_hat;
                            (
                                est.flow
                                    .as_ref()
                                    .map(|f| f.to_csv())
                                    .unwrap_or_else(|| est.trace.to_csv()),
                                Some(est.s_hat),
                                est.nu_trace.clone(),
                                s.samples_used(),
                            )
                        }
                        Err(Error::EstimateAborted { reason, trace }) => {
                            abort = Some(classify(&reason));
                            (
                                trace.to_csv(),
                                trace.rows().last().map(|r| r.estimate),
                                None,
                                s.samples_used(),
                            )
                        }
                        Err(e) => return Err(classify(&e)),
                    };
                write_file(out_dir, &trace_name, &trace_csv)?;
                if let Some(nt) = &nu_trace {
                    write_file(out_dir, "trace_nu.csv", &nt.to_csv())?;
                }
                let truth = cfg
                    .validate
                    .then(|| spectra::true_passivity(&plant))
                    .transpose()
                    .map_err(|e| RunError::Other(e.to_string()))?;
                rows.push(SummaryRow {
                    property: "s",
                    estimate,
                    truth: truth.map(|(s, _)| s),
                    samples,
                });
                if spec.with_nu {
                    rows.push(SummaryRow {
                        property: "nu",
                        estimate: nu_est,
                        truth: truth.map(|(_, nu)| nu),
                        samples,
                    });
                }
            }
            Property::Cone => {
                let mut s = session(&plant, cfg)?;
                let method = cone_method(cfg.estimator.method.as_deref().unwrap_or("uzawa"));
                let spec = fill(&cfg.estimator, method);
                let (trace_csv, c_est, r_est, samples) = match estimate_cone(&mut s, &spec) {
                    Ok(est) => (
                        est.flow
                            .as_ref()
                            .map(|f| f.to_csv())
                            .unwrap_or_else(|| est.trace.to_csv()),
                        Some(est.c_hat),
                        Some(est.r_hat),
                        s.samples_used(),
                    ),
                    Err(Error::EstimateAborted { reason, trace }) => {
                        abort = Some(classify(&reason));
                        let last = trace.rows().last();
                        (
                            trace.to_csv(),
                            last.and_then(|r| r.c),
                            last.and_then(|r| r.r),
                            s.samples_used(),
                        )
                    }
                    Err(e) => return Err(classify(&e)),
                };
                write_file(out_dir, &trace_name, &trace_csv)?;
                let truth = cfg
                    .validate
                    .then(|| spectra::true_cone(&plant))
                    .transpose()
                    .map_err(|e| RunError::Other(e.to_string()))?;
                rows.push(SummaryRow {
                    property: "cone_c",
                    estimate: c_est,
                    truth: truth.map(|(c, _)| c),
                    samples,
                });
                rows.push(SummaryRow {
                    property: "cone_r",
                    estimate: r_est,
                    truth: truth.map(|(_, r)| r),
                    samples,
                });
                if cfg.validate {
                    // White-box step bound for confirming alpha < alpha_bar;
                    // undefined when the saddle is not isolated (degenerate
                    // plants like a pure feedthrough), so reported only when
                    // it exists.
                    if let Ok(bound) = spectra::uzawa_step_bound(&plant) {
                        rows.push(SummaryRow {
                            property: "alpha_bar",
                            estimate: Some(bound),
                            truth: None,
                            samples,
                        });
                    }
                }
            }
            Property::All => unreachable!(),
        }
    }

    write_file(out_dir, "summary.csv", &summary_csv(&rows))?;
    write_file(out_dir, "meta", &meta_text(cfg, seed_override))?;
    match abort {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn truth_value(plant: &Plant, property: Property) -> Result<f64> {
    let v = match property {
        Property::Gain => spectra::l2_gain(plant).map_err(|e| RunError::Other(e.to_string()))?,
        Property::Passivity => {
            spectra::true_passivity(plant)
                .map_err(|e| RunError::Other(e.to_string()))?
                .0
        }
        Property::Cone => {
            spectra::true_cone(plant)
                .map_err(|e| RunError::Other(e.to_string()))?
                .1
        }
        Property::All => unreachable!(),
    };
    Ok(v)
}

/// The `compare` subcommand: one row per (method, budget) cell, estimating
/// the configured property under that sample budget and reporting the
/// relative error against the spectral truth.
pub fn compare(cfg: &ExperimentConfig, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let spec = cfg.compare.as_ref().expect("validated by caller");
    let plant = build_plant(&cfg.plant).map_err(|e| RunError::Config(e.to_string()))?;
    let truth = truth_value(&plant, spec.property)?;

    let mut out = String::from("method,budget,estimate,truth,rel_error,samples\n");
    for method in &spec.methods {
        for &budget in &spec.budgets {
            let noise = noise_model(&cfg.noise, cfg.estimator.seed)?;
            let mut s = ProbeSession::new(plant.clone(), noise, Some(budget))
                .map_err(|e| RunError::Config(e.to_string()))?;
            let estimate = match spec.property {
                Property::Gain => {
                    let mut c = fill(&cfg.estimator, gain_method(method));
                    c.rel_tol = 0.0;
                    c.patience = usize::MAX;
                    c.grad_tol = 0.0;
                    match estimate_gain(&mut s, &c) {
                        Ok(est) => Some(est.gamma_hat),
                        Err(Error::EstimateAborted { trace, .. }) => last_estimate(&trace),
                        Err(e) => return Err(classify(&e)),
                    }
                }
                Property::Passivity => {
                    let mut c = fill(&cfg.estimator, passivity_method(method));
                    c.rel_tol = 0.0;
                    c.patience = usize::MAX;
                    c.grad_tol = 0.0;
                    match estimate_passivity(&mut s, &c) {
                        Ok(est) => Some(est.s_hat),
                        Err(Error::EstimateAborted { trace, .. }) => last_estimate(&trace),
                        Err(e) => return Err(classify(&e)),
                    }
                }
                Property::Cone => {
                    let mut c = fill(&cfg.estimator, cone_method(method));
                    c.rel_tol = 0.0;
                    c.patience = usize::MAX;
                    c.grad_tol = 0.0;
                    match estimate_cone(&mut s, &c) {
                        Ok(est) => Some(est.r_hat),
                        Err(Error::EstimateAborted { trace, .. }) => last_estimate(&trace),
                        Err(e) => return Err(classify(&e)),
                    }
                }
                Property::All => unreachable!(),
            };
            let rel = estimate.map(|e| rel_error(e, truth));
            out.push_str(&format!(
                "{method},{budget},{},{truth},{},{}\n",
                fmt_opt(estimate),
                fmt_opt(rel),
                s.samples_used()
            ));
        }
    }
    write_file(out_dir, "compare.csv", &out)?;
    write_file(out_dir, "meta", &meta_text(cfg, seed_override))?;
    Ok(())
}

fn last_estimate(trace: &EstimateTrace) -> Option<f64> {
    trace.rows().last().map(|r| r.estimate)
}

/// The `truth` subcommand: spectral ground truth of a plant file.
pub fn truth(plant_text: &str, out_dir: &Path) -> Result<()> {
    let spec = sysprop::plantfile::parse_plant_text(plant_text)
        .map_err(|e| RunError::Config(e.to_string()))?;
    let plant = build_plant(&spec).map_err(|e| RunError::Config(e.to_string()))?;
    let mut out = String::from("property,value\n");
    let gamma = spectra::l2_gain(&plant).map_err(|e| RunError::Other(e.to_string()))?;
    out.push_str(&format!("gamma,{gamma}\n"));
    match spectra::true_passivity(&plant) {
        Ok((s, nu)) => {
            out.push_str(&format!("s,{s}\nnu,{nu}\n"));
        }
        Err(e) => {
            out.push_str(&format!("s_error,{e}\n"));
        }
    }
    let (c_star, r_min) = spectra::true_cone(&plant).map_err(|e| RunError::Other(e.to_string()))?;
    out.push_str(&format!("cone_c,{c_star}\ncone_r,{r_min}\n"));
    for (name, problem) in [
        ("gain", spectra::Problem::Gain),
        ("passivity", spectra::Problem::Passivity),
    ] {
        if let Ok(rep) = spectra::conditioning(&plant, problem) {
            out.push_str(&format!(
                "{name}_concavity_l,{}\n{name}_lipschitz_L,{}\n{name}_predicted_rate,{}\n{name}_extreme_simple,{}\n",
                rep.concavity_l, rep.lipschitz_big_l, rep.predicted_rate, rep.extreme_simple
            ));
        }
    }
    print!("{out}");
    write_file(out_dir, "truth.csv", &out)?;
    Ok(())
}
