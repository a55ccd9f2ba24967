//! CSV records and the run manifest.
//!
//! Comparison rows (`compare`, `sense`):
//!
//! | column         | meaning                                                   |
//! |----------------|-----------------------------------------------------------|
//! | `method`       | `adaptive-dict`, `adaptive-haar`, `pca`, `lasso`, `model-cosamp` |
//! | `image`        | test image label                                          |
//! | `split`        | `in-sample` or `held-out`                                 |
//! | `R`            | sensing energy budget                                     |
//! | `tau`          | threshold, empty for non-adaptive methods                 |
//! | `m`            | measurements used by this reconstruction                 |
//! | `natural_stop` | 1 when `m` is where the adaptive session ended by itself  |
//! | `trial`        | trial index                                               |
//! | `snr_db`       | reconstruction SNR, empty when `exact` is 1               |
//! | `exact`        | 1 when the reconstruction error is numerically zero      |
//! | `support_exact`| 1/0 when a true support is known, else empty              |
//! | `energy_spent` | sum of squared test-vector norms actually used            |
//! | `wall_time_ms` | empty unless timing was requested                         |
//!
//! Theorem runs write one row per trial and one summary row per cell; see
//! [`TheoremTrialRow`] and [`TheoremSummaryRow`]. Dictionary learning writes
//! one [`ObjectiveRow`] per alternation, row 0 being the initial dictionary.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::snr::Snr;

pub const COMPARISON_HEADER: &[&str] = &[
    "method",
    "image",
    "split",
    "R",
    "tau",
    "m",
    "natural_stop",
    "trial",
    "snr_db",
    "exact",
    "support_exact",
    "energy_spent",
    "wall_time_ms",
];

pub const THEOREM_TRIAL_HEADER: &[&str] = &[
    "d",
    "L",
    "k",
    "R",
    "beta",
    "alpha_min",
    "tau",
    "trial",
    "m",
    "support_exact",
    "truncated",
    "energy_spent",
];

pub const THEOREM_SUMMARY_HEADER: &[&str] = &[
    "d",
    "L",
    "k",
    "R",
    "beta",
    "alpha_min",
    "tau",
    "trials",
    "failures",
    "failure_rate",
    "bound",
    "mean_m",
    "predicted_m",
    "m_law_violations",
];

pub const OBJECTIVE_HEADER: &[&str] = &["iteration", "objective"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub image: String,
    pub split: String,
    #[serde(rename = "R")]
    pub budget: f64,
    pub tau: Option<f64>,
    pub m: usize,
    pub natural_stop: u8,
    pub trial: usize,
    pub snr_db: Option<f64>,
    pub exact: u8,
    pub support_exact: Option<u8>,
    pub energy_spent: f64,
    pub wall_time_ms: Option<f64>,
}

impl ComparisonRow {
    pub fn set_snr(&mut self, snr: Snr) {
        self.snr_db = snr.db();
        self.exact = snr.is_exact() as u8;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremTrialRow {
    pub d: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub budget: f64,
    pub beta: f64,
    pub alpha_min: f64,
    pub tau: f64,
    pub trial: usize,
    pub m: usize,
    pub support_exact: u8,
    pub truncated: u8,
    pub energy_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremSummaryRow {
    pub d: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub budget: f64,
    pub beta: f64,
    pub alpha_min: f64,
    pub tau: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub bound: f64,
    pub mean_m: f64,
    pub predicted_m: usize,
    /// Trials with exact support but `m != dk + 1`.
    pub m_law_violations: usize,
}

pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::arg(format!("CSV buffer: {e}")))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let bytes = csv_bytes(rows, header)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a CSV file, checking the header against `header`.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Config(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            found,
            header
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Companion text file: subcommand, seed, library version and the resolved
/// configuration.
pub fn write_manifest(path: &Path, subcommand: &str, seed: u64, config_text: &str, notes: &[String]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = format!(
        "subcommand = {subcommand}\nseed = {seed}\nversion = {}\n\n[config]\n{config_text}",
        env!("CARGO_PKG_VERSION")
    );
    if !notes.is_empty() {
        text.push_str("\n[notes]\n");
        for n in notes {
            text.push_str(n);
            text.push('\n');
        }
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// `<out>.manifest.txt` next to the CSV.
pub fn manifest_path(csv: &Path) -> std::path::PathBuf {
    let mut name = csv.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.txt");
    csv.with_file_name(name)
}
