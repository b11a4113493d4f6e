use std::path::Path;

use multiphase::grid::{boundary_cells, GridDomain, IndicatorSet, PhaseField};
use multiphase::io::{write_table, Report, ToReport};
use multiphase::optimize::binarize;
use multiphase::pde::{assemble, eigs_smallest, torsion_of_set, BoundaryMode, Region, SolverConfig};
use multiphase::shapefn::{FunctionalSpec, ObjectiveSpec};
use multiphase::theory::{
    density_profile, energy_multiplier, estimate_lip_constant, growth_bounds, growth_profile, junction_scan,
    linear_growth_constant, lower_bound_check, perimeter_bound_check, separation_check, subsolution_test,
    SamplerSpec,
};

use super::{resolve, Context};
use crate::config::{self, CheckName, VerifyCfg};
use crate::error::CliError;

/// One row of `checks.csv`.
struct Row {
    check: &'static str,
    phase: Option<usize>,
    quantity: &'static str,
    value: String,
    threshold: String,
    verdict: &'static str,
}

impl Row {
    fn report(check: &'static str, phase: Option<usize>, quantity: &'static str, value: impl ToString) -> Self {
        Self {
            check,
            phase,
            quantity,
            value: value.to_string(),
            threshold: String::new(),
            verdict: "report",
        }
    }

    fn assert(
        check: &'static str,
        phase: Option<usize>,
        quantity: &'static str,
        value: impl ToString,
        threshold: impl ToString,
        pass: bool,
    ) -> Self {
        Self {
            check,
            phase,
            quantity,
            value: value.to_string(),
            threshold: threshold.to_string(),
            verdict: if pass { "pass" } else { "fail" },
        }
    }
}

/// The optimizer output being verified.
struct Input {
    domain: std::sync::Arc<GridDomain<f64>>,
    objective: ObjectiveSpec<f64>,
    solver: SolverConfig<f64>,
    sets: Vec<IndicatorSet<f64>>,
    seed: u64,
}

fn load_input(dir: &Path) -> Result<Input, CliError> {
    let run_path = dir.join("run.toml");
    if !run_path.is_file() {
        return Err(CliError::Input(format!("{}: not found (is this an optimize output?)", run_path.display())));
    }
    let run = config::load(&run_path)?;
    let domain = run
        .domain
        .as_ref()
        .ok_or_else(|| CliError::Input(format!("{}: missing [domain]", run_path.display())))?
        .build(dir)?;
    let objective = run
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Input(format!("{}: missing [objective]", run_path.display())))?
        .build()?;
    let solver = run.solver.build()?;
    let threshold = run.optimizer.threshold.unwrap_or(0.5);
    let phases = (0..objective.phases())
        .map(|i| {
            let path = dir.join(format!("final_phase_{}.spf", i + 1));
            let values = config::read_field(&path, &domain)?;
            PhaseField::new(domain.clone(), values, i).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let sets = binarize(&phases, threshold)?;
    Ok(Input {
        domain,
        objective,
        solver,
        sets,
        seed: run.seed,
    })
}

pub fn run(mut ctx: Context) -> Result<(), CliError> {
    let vcfg = ctx
        .config
        .verify
        .clone()
        .ok_or_else(|| CliError::Config("missing [verify] section".into()))?;
    let input = load_input(&resolve(&ctx.base_dir, &vcfg.input_dir))?;
    let mut rows = Vec::new();
    for &check in &vcfg.checks {
        log::info!("running {} check", check.name());
        rows.extend(run_check(&mut ctx, &input, &vcfg, check)?);
    }

    let header: Vec<String> = ["check", "phase", "quantity", "value", "threshold", "pass"].map(String::from).to_vec();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.check.to_string(),
                r.phase.map_or_else(String::new, |p| p.to_string()),
                r.quantity.to_string(),
                r.value.clone(),
                r.threshold.clone(),
                r.verdict.to_string(),
            ]
        })
        .collect();
    // The combined table is the primary artifact of this command, so it ignores the format selection.
    let mut buf = Vec::new();
    write_table(&mut buf, &header, &table)?;
    ctx.out.text("checks.csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
    let failed = rows.iter().filter(|r| r.verdict == "fail").count();
    if failed > 0 {
        log::warn!("{failed} check row(s) failed; see checks.csv");
    }

    let mut tolerances = super::solver_tolerances(&input.solver);
    tolerances
        .put("subsolution.slack_factor", vcfg.subsolution.slack_factor)
        .put("subsolution.min_pass_fraction", vcfg.subsolution.min_pass_fraction)
        .put("perimeter.tolerance", vcfg.perimeter.tolerance)
        .put("growth.min_linear_constant", vcfg.growth.min_linear_constant)
        .put("junction.radius_cells", vcfg.junction.radius_cells)
        .put("separation.tolerance", vcfg.separation.tolerance);
    ctx.finish("verify", &tolerances)
}

fn write_report(ctx: &mut Context, name: &str, report: &Report) -> Result<(), CliError> {
    ctx.out.text(name, &report.to_string())
}

fn lambda1(set: &IndicatorSet<f64>, solver: SolverConfig<f64>) -> Result<f64, CliError> {
    let op = assemble(Region::Support(set), BoundaryMode::Exact, solver)?;
    Ok(eigs_smallest(&op, 1)?[0].lambda)
}

/// Boundary cell of `set` farthest from the box edge.
fn boundary_anchor(set: &IndicatorSet<f64>) -> Option<Vec<f64>> {
    let domain = set.domain();
    boundary_cells(set)
        .indices()
        .map(|idx| domain.center(idx)[..domain.dim()].to_vec())
        .max_by(|a, b| domain.distance_to_box_edge(a).total_cmp(&domain.distance_to_box_edge(b)))
}

fn run_check(ctx: &mut Context, input: &Input, vcfg: &VerifyCfg, check: CheckName) -> Result<Vec<Row>, CliError> {
    let h = input.domain.h();
    let m = input.objective.m;
    let l = input.objective.g.lipschitz();
    let solver = input.solver;
    let mut rows = Vec::new();
    let name = check.name();

    if check == CheckName::Junction || check == CheckName::Separation {
        if check == CheckName::Junction {
            let report = junction_scan(&input.sets, vcfg.junction.radius_cells * h)?;
            write_report(ctx, "junction.txt", &report.to_report())?;
            let count = report.triple_candidates.len();
            // Without a measure penalty the phases may tile the domain and junctions are expected.
            rows.push(if m > 0.0 {
                Row::assert(name, None, "triple_candidates", count, 0, count == 0)
            } else {
                Row::report(name, None, "triple_candidates", count)
            });
            rows.push(Row::report(name, None, "internal_double", report.internal_double));
            rows.push(Row::report(name, None, "boundary_double", report.boundary_double));
        } else {
            let fields = input
                .sets
                .iter()
                .map(|s| torsion_of_set(s, solver))
                .collect::<multiphase::Result<Vec<_>>>()?;
            let report = separation_check(&input.sets, &fields)?;
            write_report(ctx, "separation.txt", &report.to_report())?;
            let tol = vcfg.separation.tolerance;
            rows.push(Row::assert(
                name,
                None,
                "max_interface_relative",
                report.max_interface_relative,
                tol,
                report.max_interface_relative <= tol,
            ));
            rows.push(Row::report(name, None, "max_inner_relative", report.max_inner_relative));
            // Abutting phases (internal double points) fail the one-cell neighborhood construction.
            let all = report.separated.iter().all(|&s| s);
            rows.push(Row::report(name, None, "separated", all));
        }
        return Ok(rows);
    }

    for (i, set) in input.sets.iter().enumerate() {
        let phase = Some(i + 1);
        if set.is_empty() {
            rows.push(Row::report(name, phase, "vanished", true));
            continue;
        }
        let spec = input.objective.functionals[i];
        let file = format!("{name}_phase_{}.txt", i + 1);
        match check {
            CheckName::Subsolution => {
                if !(m > 0.0) {
                    rows.push(Row::report(name, phase, "skipped_m_zero", true));
                    continue;
                }
                let c = energy_lip_constant(spec, set, vcfg, input.seed, solver)?;
                let m_e = energy_multiplier(m, c, l)?;
                let sampler = SamplerSpec {
                    ball_fraction: vcfg.subsolution.ball_fraction,
                    ..SamplerSpec::default()
                };
                let slack = vcfg.subsolution.slack_factor * h * set.measure();
                let report =
                    subsolution_test(set, m_e, &sampler, vcfg.subsolution.count, input.seed, slack, solver)?;
                let mut text = Report::new();
                text.put("lip_constant", c).put("aggregator_lipschitz", l);
                text.extend_prefixed("test", &report.to_report());
                write_report(ctx, &file, &text)?;
                let min = vcfg.subsolution.min_pass_fraction;
                rows.push(Row::report(name, phase, "energy_multiplier", m_e));
                rows.push(Row::assert(name, phase, "pass_fraction", report.pass_fraction, min, report.pass_fraction >= min));
                rows.push(Row::report(name, phase, "strict_fraction", report.strict_fraction));
            }
            CheckName::Perimeter => {
                let tol = vcfg.perimeter.tolerance;
                let mut text = Report::new();
                if m > 0.0 {
                    let c = energy_lip_constant(spec, set, vcfg, input.seed, solver)?;
                    let m_e = energy_multiplier(m, c, l)?;
                    let energy = perimeter_bound_check(set, m_e, None, tol)?;
                    text.extend_prefixed("energy", &energy.to_report());
                    rows.push(Row::assert(name, phase, "energy_ratio", energy.energy_ratio, 1.0 + tol, energy.energy_ok));
                }
                if spec == (FunctionalSpec::Eigenvalue { k: 1 }) {
                    let eigen = perimeter_bound_check(set, m / l, Some(lambda1(set, solver)?), tol)?;
                    text.extend_prefixed("eigen", &eigen.to_report());
                    if let (Some(r), Some(ok)) = (eigen.eigen_ratio, eigen.eigen_ok) {
                        rows.push(Row::assert(name, phase, "eigen_ratio", r, 1.0 + tol, ok));
                    }
                }
                text.put("measure", set.measure());
                write_report(ctx, &file, &text)?;
            }
            CheckName::LowerBound => {
                if !(m > 0.0) {
                    rows.push(Row::report(name, phase, "skipped_m_zero", true));
                    continue;
                }
                let report = lower_bound_check(set, m, lambda1(set, solver)?)?;
                write_report(ctx, &file, &report.to_report())?;
                rows.push(Row::report(name, phase, "scaled_measure", report.scaled_measure));
                rows.push(Row::report(name, phase, "scaled_eigenvalue", report.scaled_eigenvalue));
            }
            CheckName::Growth => {
                let w = torsion_of_set(set, solver)?;
                let Some(x0) = boundary_anchor(set) else { continue };
                let radii: Vec<f64> = vcfg.growth.radii_cells.iter().map(|c| c * h).collect();
                let bounds = growth_bounds(&w, &x0, &radii)?;
                let profile = growth_profile(&w, &x0, &radii)?;
                let linear_radii: Vec<f64> = vcfg.growth.linear_radii_cells.iter().map(|c| c * h).collect();
                let linear = linear_growth_constant(&w, &linear_radii)?;
                let mut text = Report::new();
                text.put_list("center", &x0);
                text.extend_prefixed("bounds", &bounds.to_report());
                text.extend_prefixed("linear", &linear.to_report());
                write_report(ctx, &file, &text)?;
                let table: Vec<Vec<String>> = profile
                    .rows
                    .iter()
                    .map(|r| vec![r.r.to_string(), r.sup.to_string(), r.mean.to_string()])
                    .collect();
                let header = ["r", "sup", "mean"].map(String::from).to_vec();
                ctx.out.csv(&format!("growth_phase_{}.csv", i + 1), &header, &table)?;
                rows.push(Row::assert(name, phase, "upper_holds", bounds.upper_holds, true, bounds.upper_holds));
                rows.push(match bounds.worst_lower_constant {
                    Some(c) => Row::report(name, phase, "worst_lower_constant", c),
                    None => Row::report(name, phase, "worst_lower_constant", "none"),
                });
                let min = vcfg.growth.min_linear_constant;
                rows.push(Row::assert(name, phase, "linear_constant", linear.constant, min, linear.constant >= min));
            }
            CheckName::Density => {
                let Some(x0) = boundary_anchor(set) else { continue };
                let radii: Vec<f64> = vcfg.density.radii_cells.iter().map(|c| c * h).collect();
                let report = density_profile(set, &x0, &radii)?;
                write_report(ctx, &file, &report.to_report())?;
                rows.push(Row::report(name, phase, "max_ratio", report.max));
            }
            CheckName::Junction | CheckName::Separation => unreachable!(),
        }
    }
    Ok(rows)
}

/// γ-Lipschitz constant used to turn `m` into the energy multiplier; exactly `1/2` for the energy itself.
fn energy_lip_constant(
    spec: FunctionalSpec,
    set: &IndicatorSet<f64>,
    vcfg: &VerifyCfg,
    seed: u64,
    solver: SolverConfig<f64>,
) -> Result<f64, CliError> {
    match spec {
        FunctionalSpec::TorsionEnergy => Ok(0.5),
        FunctionalSpec::Eigenvalue { .. } => {
            let sampler = SamplerSpec::default();
            Ok(estimate_lip_constant(spec, set, &sampler, vcfg.subsolution.probe_count, seed, solver)?)
        }
    }
}
