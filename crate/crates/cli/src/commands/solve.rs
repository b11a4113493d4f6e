use multiphase::grid::IndicatorSet;
use multiphase::pde::{assemble, eigs_smallest, torsion_of_set, BoundaryMode, Region};

use super::{quantity_rows, solver_tolerances, Context};
use crate::config::Problem;
use crate::error::CliError;
use crate::plot;

pub fn run(mut ctx: Context) -> Result<(), CliError> {
    let domain = ctx.domain()?;
    let solve = ctx
        .config
        .solve
        .clone()
        .ok_or_else(|| CliError::Config("missing [solve] section".into()))?;
    let solver = ctx.config.solver.build()?;
    let support = solve.support.to_set(&domain, &ctx.base_dir, "solve.support")?;
    if support.is_empty() {
        return Err(CliError::Input("solve.support contains no cell of the domain".into()));
    }

    let mut summary: Vec<(String, String)> = vec![
        ("cells".into(), support.count().to_string()),
        ("measure".into(), support.measure().to_string()),
    ];
    ctx.out.png("support.png", &plot::phase_map(&domain, std::slice::from_ref(&support)))?;
    ctx.out.spfield("support.spf", &domain, &indicator_values(&support))?;

    if matches!(solve.problem, Problem::Eigen | Problem::Both) {
        let op = assemble(Region::Support(&support), BoundaryMode::Exact, solver)?;
        let pairs = eigs_smallest(&op, solve.eigenpairs)?;
        for p in &pairs {
            log::info!("lambda_{} = {} (residual {:.2e})", p.index, p.lambda, p.residual);
            summary.push((format!("lambda_{}", p.index), p.lambda.to_string()));
            summary.push((format!("residual_{}", p.index), p.residual.to_string()));
            ctx.out.spfield(&format!("eigen_{}.spf", p.index), &domain, &p.u)?;
        }
        ctx.out.png("eigen_1.png", &plot::scalar_map(&domain, &pairs[0].u))?;
    }
    if matches!(solve.problem, Problem::Torsion | Problem::Both) {
        let w = torsion_of_set(&support, solver)?;
        log::info!("torsion energy {} after {} iterations", w.energy(), w.iterations());
        summary.push(("energy".into(), w.energy().to_string()));
        summary.push(("torsion_max".into(), w.max().to_string()));
        summary.push(("cg_iterations".into(), w.iterations().to_string()));
        summary.push(("cg_residual".into(), w.residual().to_string()));
        ctx.out.spfield("torsion.spf", &domain, w.values())?;
        ctx.out.png("torsion.png", &plot::scalar_map(&domain, w.values()))?;
    }

    let (header, rows) = quantity_rows(&summary);
    ctx.out.csv("summary.csv", &header, &rows)?;
    let tolerances = solver_tolerances(&solver);
    ctx.finish("solve", &tolerances)
}

pub fn indicator_values(set: &IndicatorSet<f64>) -> Vec<f64> {
    set.support().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}
