use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "meta.json";

/// One long-format CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: &'static str,
    pub time: Option<f64>,
    pub quantity: String,
    pub value: String,
    pub std_error: Option<f64>,
}

impl Row {
    pub fn new(experiment: &'static str, time: Option<f64>, quantity: impl Into<String>, value: f64) -> Self {
        Row {
            experiment,
            time,
            quantity: quantity.into(),
            value: value.to_string(),
            std_error: None,
        }
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    pub fn flag(experiment: &'static str, time: Option<f64>, quantity: impl Into<String>, v: bool) -> Self {
        Row {
            experiment,
            time,
            quantity: quantity.into(),
            value: v.to_string(),
            std_error: None,
        }
    }
}

/// Scalar results. Absent constants serialise as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub m_sup: Option<f64>,
    pub omega: Option<f64>,
    pub zeta: Option<f64>,
    pub c_const: Option<f64>,
    pub fitted_exponent: Option<f64>,
    pub fitted_ci_low: Option<f64>,
    pub fitted_ci_high: Option<f64>,
    pub kappa_hat: Option<f64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(experiment: &str) -> Self {
        Report {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.extra.insert(key.to_string(), v.into());
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    config: &'a RunConfig,
    seed: Option<u64>,
    version: &'static str,
    threads: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["experiment", "time", "quantity", "value", "std_error"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.experiment.to_string(),
            opt(r.time),
            r.quantity.clone(),
            r.value.clone(),
            opt(r.std_error),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the three output files; on failure removes whichever were created.
pub fn write_outputs(
    out_dir: &Path,
    rows: &[Row],
    report: &Report,
    config: &RunConfig,
    threads: usize,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)?;
    let paths: Vec<PathBuf> = [RESULTS_FILE, REPORT_FILE, META_FILE]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    let meta = Meta {
        config,
        seed: config.seed(),
        version: env!("CARGO_PKG_VERSION"),
        threads,
    };
    let result = write_csv(&paths[0], rows)
        .and_then(|_| write_json(&paths[1], report))
        .and_then(|_| write_json(&paths[2], &meta));
    if result.is_err() {
        remove_outputs(out_dir);
    }
    result
}

/// Deletes any output files left in `out_dir`.
pub fn remove_outputs(out_dir: &Path) {
    for f in [RESULTS_FILE, REPORT_FILE, META_FILE] {
        let _ = fs::remove_file(out_dir.join(f));
    }
}
