pub mod monotonicity;
pub mod optimize;
pub mod solve;
pub mod verify;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use multiphase::grid::GridDomain;
use multiphase::io::Report;
use multiphase::pde::SolverConfig;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Output;

/// Everything a subcommand needs.
pub struct Context {
    pub config: RunConfig,
    pub config_path: PathBuf,
    /// Relative input paths in the configuration are resolved against this.
    pub base_dir: PathBuf,
    pub out: Output,
}

impl Context {
    pub fn domain(&self) -> Result<Arc<GridDomain<f64>>, CliError> {
        self.config
            .domain
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [domain] section".into()))?
            .build(&self.base_dir)
    }

    pub fn finish(self, command: &str, tolerances: &Report) -> Result<(), CliError> {
        let Context { config, config_path, out, .. } = self;
        out.finish(command, &config_path, config.seed, tolerances)
    }
}

pub fn solver_tolerances(solver: &SolverConfig<f64>) -> Report {
    let mut r = Report::new();
    r.put("cg_tol", solver.cg_tol)
        .put("cg_max_iter", solver.cg_max_iter)
        .put("eig_tol", solver.eig_tol)
        .put("eig_max_iter", solver.eig_max_iter)
        .put("preconditioner", format!("{:?}", solver.preconditioner).to_lowercase())
        .put("eig_seed", solver.seed);
    r
}

pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn quantity_rows(rows: &[(String, String)]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = vec!["quantity".to_string(), "value".to_string()];
    let rows = rows.iter().map(|(k, v)| vec![k.clone(), v.clone()]).collect();
    (header, rows)
}
