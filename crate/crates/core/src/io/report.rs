use std::fmt::{self, Display};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::theory::{
    AltCaffarelli, DensityProfile, GrowthBounds, JunctionReport, LinearGrowth, LowerBoundReport,
    PerimeterReport, SeparationReport, SubsolutionReport,
};

/// Ordered `key=value` lines. Keys are lowercase ASCII with `_` and `.`;
/// values never contain newlines; lists are comma-separated and missing
/// values are written as `none`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        debug_assert!(valid_key(key), "invalid report key {key:?}");
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.entries.push((key.to_string(), value));
        self
    }

    pub fn put_opt<V: Display>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        match value {
            Some(v) => self.put(key, v),
            None => self.put(key, "none"),
        }
    }

    pub fn put_list<V: Display>(&mut self, key: &str, values: &[V]) -> &mut Self {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.put(key, joined.join(","))
    }

    /// Appends every entry of `other` under `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Report) -> &mut Self {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}.{k}"), v.clone()));
        }
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'.')
}

/// Parses the output of [`Report`]'s `Display`; blank lines and lines
/// starting with `#` are ignored.
pub fn parse_report(text: &str) -> Result<Report> {
    let mut report = Report::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
        if !valid_key(k) {
            return Err(Error::Format(format!("line {}: invalid key {k:?}", n + 1)));
        }
        report.entries.push((k.to_string(), v.to_string()));
    }
    Ok(report)
}

pub trait ToReport {
    fn to_report(&self) -> Report;
}

impl<T: Real> ToReport for SubsolutionReport<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("m", self.m)
            .put("sampled", self.sampled)
            .put("evaluated", self.records.len())
            .put("skipped", self.skipped.len())
            .put("energy", self.energy)
            .put("measure", self.measure)
            .put("slack", self.slack)
            .put("pass_fraction", self.pass_fraction)
            .put("strict_fraction", self.strict_fraction)
            .put_opt("worst_margin", self.worst_margin())
            .put_opt("max_ratio", self.max_ratio());
        for (i, rec) in self.records.iter().enumerate() {
            let p = format!("perturbation.{}", i + 1);
            r.put(&format!("{p}.kind"), rec.perturbation.kind())
                .put_list(&format!("{p}.center"), rec.perturbation.center())
                .put(&format!("{p}.radius"), rec.perturbation.radius())
                .put(&format!("{p}.delta_energy"), rec.delta_energy)
                .put(&format!("{p}.delta_measure"), rec.delta_measure)
                .put(&format!("{p}.margin"), rec.margin)
                .put(&format!("{p}.d_gamma"), rec.d_gamma)
                .put_opt(&format!("{p}.ratio"), rec.ratio)
                .put(&format!("{p}.trivial"), rec.trivial);
        }
        r
    }
}

impl<T: Real> ToReport for PerimeterReport<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("m", self.m)
            .put("perimeter", self.perimeter)
            .put("measure", self.measure)
            .put("energy_ratio", self.energy_ratio)
            .put_opt("eigen_ratio", self.eigen_ratio)
            .put("tolerance", self.tolerance)
            .put("energy_ok", self.energy_ok)
            .put_opt("eigen_ok", self.eigen_ok);
        r
    }
}

impl<T: Real> ToReport for LowerBoundReport<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("m", self.m)
            .put("measure", self.measure)
            .put("lambda1", self.lambda1)
            .put("scaled_measure", self.scaled_measure)
            .put("scaled_eigenvalue", self.scaled_eigenvalue);
        r
    }
}

impl<T: Real> ToReport for JunctionReport<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("radius", self.radius)
            .put("band_cells", self.band_cells)
            .put("triple_candidates", self.triple_candidates.len())
            .put("simple", self.simple)
            .put("internal_double", self.internal_double)
            .put("boundary_double", self.boundary_double);
        for (i, p) in self.triple_candidates.iter().enumerate() {
            r.put_list(&format!("triple.{}.center", i + 1), &p.center);
            let ids: Vec<usize> = p.phases.iter().map(|q| q + 1).collect();
            r.put_list(&format!("triple.{}.phases", i + 1), &ids);
        }
        r
    }
}

impl<T: Real> ToReport for SeparationReport<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("max_interface_relative", self.max_interface_relative)
            .put("max_inner_relative", self.max_inner_relative)
            .put_list("separated", &self.separated);
        for p in &self.pairs {
            let key = format!("pair.{}_{}", p.i + 1, p.j + 1);
            r.put(&format!("{key}.interface_cells"), p.interface_cells)
                .put(&format!("{key}.interface_relative"), p.interface_relative)
                .put(&format!("{key}.inner_relative"), p.inner_relative);
        }
        r
    }
}

impl<T: Real> ToReport for GrowthBounds<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put_list("radii", &self.radii)
            .put("upper_holds", self.upper_holds)
            .put_opt("worst_lower_constant", self.worst_lower_constant)
            .put("reference_constant", self.reference_constant);
        r
    }
}

impl<T: Real> ToReport for LinearGrowth<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("constant", self.constant)
            .put_list("worst_center", &self.worst_center)
            .put("worst_radius", self.worst_radius)
            .put("points", self.points);
        r
    }
}

impl<T: Real> ToReport for DensityProfile<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put_list("center", &self.center).put("max", self.max);
        for (i, (radius, ratio)) in self.rows.iter().enumerate() {
            r.put(&format!("row.{}.r", i + 1), radius)
                .put(&format!("row.{}.ratio", i + 1), ratio);
        }
        r
    }
}

impl<T: Real> ToReport for AltCaffarelli<T> {
    fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.put("r", self.r)
            .put("zero_measure", self.zero_measure)
            .put("shell_mean", self.shell_mean)
            .put("lhs", self.lhs)
            .put("rhs", self.rhs)
            .put_opt("ratio", self.ratio);
        r
    }
}
