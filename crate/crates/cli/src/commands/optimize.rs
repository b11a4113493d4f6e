use multiphase::io::write_trace_csv;
use multiphase::optimize::run_with_observer;
use multiphase::shapefn::FunctionalSpec;
use serde_json::json;

use super::{solver_tolerances, Context};
use crate::error::CliError;
use crate::plot;

pub fn run(mut ctx: Context) -> Result<(), CliError> {
    let domain = ctx.domain()?;
    let objective = ctx
        .config
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [objective] section".into()))?
        .build()?;
    let solver = ctx.config.solver.build()?;
    let config = ctx.config.optimizer.build(ctx.config.seed, solver)?;
    let phases = objective.phases();

    let result = run_with_observer(&objective, &domain, &config, &mut |rec| {
        log::debug!("iter {} mu {} objective {}", rec.iteration, rec.mu, rec.objective);
    })?;
    let diag = &result.diagnostics;
    if diag.stalled() {
        log::warn!("line search stalled in stage(s) {:?}; writing best-so-far", diag.stalled_stages);
    }

    ctx.out.csv_with("trace.csv", |w| write_trace_csv(w, &result.trace, phases))?;
    for (i, phase) in result.phases.iter().enumerate() {
        ctx.out.spfield(&format!("final_phase_{}.spf", i + 1), &domain, phase.values())?;
    }
    for (s, stage) in result.stages.iter().enumerate() {
        for (i, phase) in stage.phases.iter().enumerate() {
            ctx.out.spfield(&format!("stage_{}_phase_{}.spf", s + 1, i + 1), &domain, phase.values())?;
        }
    }
    ctx.out.png("phases.png", &plot::phase_map(&domain, &result.sets))?;

    let names: Vec<String> = objective
        .functionals
        .iter()
        .map(|f| match f {
            FunctionalSpec::Eigenvalue { k } => format!("lambda_{k}"),
            FunctionalSpec::TorsionEnergy => "energy".into(),
        })
        .collect();
    let finite = |v: f64| if v.is_finite() { json!(v) } else { json!(v.to_string()) };
    let covered: f64 = result.exact.measures.iter().sum();
    let void = (domain.measure() - covered).max(0.0);
    let summary = json!({
        "phases": phases,
        "functionals": names,
        "m": objective.m,
        "exact": {
            "values": result.exact.values.iter().map(|&v| finite(v)).collect::<Vec<_>>(),
            "measures": result.exact.measures,
            "g": finite(result.exact.g),
            "objective": finite(result.exact.total),
        },
        "penalized": {
            "mu": config.mu_schedule.last(),
            "values": result.penalized.values.iter().map(|&v| finite(v)).collect::<Vec<_>>(),
            "measures": result.penalized.measures,
            "objective": finite(result.penalized.total),
        },
        "void_measure": void,
        "iterations": result.trace.len(),
        "stalled": diag.stalled(),
        "diagnostics": {
            "degenerate_evaluations": diag.degenerate_evaluations,
            "line_search_failures": diag.line_search_failures,
            "stalled_stages": diag.stalled_stages.iter().map(|s| s + 1).collect::<Vec<_>>(),
            "vanished_phases": diag.vanished_phases.iter().map(|p| p + 1).collect::<Vec<_>>(),
            "iteration_limited_stages": diag.iteration_limited_stages.iter().map(|s| s + 1).collect::<Vec<_>>(),
        },
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    ctx.out.text("summary.json", &(text + "\n"))?;

    let mut run_config = ctx.config.clone();
    run_config.output_dir = None;
    if let Some(d) = run_config.domain.as_mut() {
        absolutize_mask(d, &ctx.base_dir);
    }
    let toml_text = toml::to_string(&run_config).map_err(|e| CliError::Config(e.to_string()))?;
    ctx.out.text("run.toml", &toml_text)?;

    let mut tolerances = solver_tolerances(&solver);
    tolerances
        .put("stop_tol", config.stop_tol)
        .put("armijo", config.armijo)
        .put("threshold", config.threshold)
        .put("gap_tol", config.gap_tol)
        .put_list("mu_schedule", &config.mu_schedule);
    ctx.finish("optimize", &tolerances)
}

/// Keeps a file mask valid when `run.toml` is read from another directory.
fn absolutize_mask(domain: &mut crate::config::DomainCfg, base: &std::path::Path) {
    if let Some(crate::config::ShapeCfg::File { path }) = domain.mask.as_mut() {
        *path = super::resolve(base, path);
        if let Ok(abs) = std::fs::canonicalize(&*path) {
            *path = abs;
        }
    }
}
