//! Output directory bookkeeping and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use multiphase::grid::GridDomain;
use multiphase::io::{write_spfield, write_table, Encoding, Report, SpField};

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

pub struct Output {
    dir: PathBuf,
    formats: Vec<OutputFormat>,
    encoding: Encoding,
    written: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: config.formats.clone(),
            encoding: config.spfield_encoding.into(),
            written: Vec::new(),
        })
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn io_error(&self, name: &str, source: std::io::Error) -> CliError {
        CliError::Output {
            path: self.dir.join(name).display().to_string(),
            source,
        }
    }

    /// Always written, regardless of the format selection.
    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| self.io_error(name, e))
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        if !self.wants(OutputFormat::Csv) {
            return Ok(());
        }
        let w = self.open(name)?;
        write_table(w, header, rows)?;
        Ok(())
    }

    /// Writes with a caller-supplied CSV emitter.
    pub fn csv_with(
        &mut self,
        name: &str,
        emit: impl FnOnce(&mut BufWriter<File>) -> multiphase::Result<()>,
    ) -> Result<(), CliError> {
        if !self.wants(OutputFormat::Csv) {
            return Ok(());
        }
        let mut w = self.open(name)?;
        emit(&mut w)?;
        Ok(())
    }

    pub fn spfield(&mut self, name: &str, domain: &GridDomain<f64>, values: &[f64]) -> Result<(), CliError> {
        if !self.wants(OutputFormat::Spfield) {
            return Ok(());
        }
        let field = SpField::from_domain(domain, values)?;
        let encoding = self.encoding;
        let w = self.open(name)?;
        write_spfield(w, &field, encoding)?;
        Ok(())
    }

    pub fn png(&mut self, name: &str, image: &RgbImage) -> Result<(), CliError> {
        if !self.wants(OutputFormat::Png) {
            return Ok(());
        }
        let path = self.dir.join(name);
        image.save(&path)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// `manifest.txt`: command, inputs, seed, tolerances and the files written.
    pub fn finish(mut self, command: &str, config_path: &Path, seed: u64, tolerances: &Report) -> Result<(), CliError> {
        let mut manifest = Report::new();
        manifest
            .put("command", command)
            .put("version", env!("CARGO_PKG_VERSION"))
            .put("config", config_path.display())
            .put("seed", seed)
            .extend_prefixed("tolerance", tolerances);
        let mut files = self.written.clone();
        files.push("manifest.txt".into());
        manifest.put_list("outputs", &files);
        self.text("manifest.txt", &manifest.to_string())
    }
}
