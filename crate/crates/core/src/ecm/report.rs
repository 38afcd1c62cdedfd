use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FitConfig, HmmParams, Posteriors};
use crate::error::{Error, Result};
use crate::panel::PanelDims;
use crate::structures::StructurePair;

/// Everything produced by one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub structure: StructurePair,
    pub k: usize,
    pub dims: PanelDims,
    pub config: FitConfig,
    pub params: HmmParams,
    pub posteriors: Posteriors,
    pub log_lik: f64,
    /// Log-likelihood of the selected start, then one entry per ECM iteration.
    pub log_lik_trace: Vec<f64>,
    pub bic: f64,
    pub n_params: usize,
    /// Zero-based most probable state per unit and time.
    pub decoded: Vec<Vec<usize>>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
    pub failed_starts: Vec<String>,
    pub warnings: Vec<String>,
    pub unit_labels: Vec<String>,
    pub time_labels: Vec<String>,
}

impl FitReport {
    /// Equality of everything except wall-clock time.
    pub fn same_results(&self, other: &FitReport) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        a == *other
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<FitReport> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_fit_report(report: &FitReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)?;
    Ok(())
}

pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Log-probabilities where `-inf` is stored as `null`.
pub(crate) mod log_values {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Option<f64>> = values.iter().map(|v| v.is_finite().then_some(*v)).collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::fit;
    use crate::panel::MatrixPanel;

    #[test]
    fn json_round_trip_is_exact() {
        let panel = MatrixPanel::from_fn(PanelDims::new(2, 1, 6, 3), |p, _, i, t| {
            ((i * 7 + t * 3 + p) % 5) as f64 * 0.37 + if i % 2 == 0 { 4.0 } else { 0.0 }
        })
        .unwrap();
        let config = FitConfig { short_runs: 3, max_iter: 20, ..FitConfig::default() };
        let mut report = fit(&panel, "VVI-VI".parse().unwrap(), 2, &config).unwrap();
        report.posteriors.log_gamma[0] = f64::NEG_INFINITY;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        write_fit_report(&report, &path).unwrap();
        let back = read_fit_report(&path).unwrap();
        assert_eq!(back, report);
        assert_eq!(FitReport::from_json(&report.to_json().unwrap()).unwrap(), report);
    }
}
