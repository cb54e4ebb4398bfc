//! Report files.
//!
//! `records.csv` (one row per record) starts with the comment line
//! `# treespec records v1` followed by this header:
//!
//! ```text
//! domain,lambda,tau,branch,depth,budget,prompts,cycles,emitted_tokens,
//! target_context_evals,target_passes,draft_calls,tree_nodes,gamma,
//! kl_estimate,predicted_speedup,losslessness_verified
//! ```
//!
//! `kl_gamma.csv` starts with `# treespec kl-gamma v1` and has the columns
//! `kl_estimate,gamma`, one row per record in record order (records are
//! sorted by domain, then lambda).
//!
//! `report.json` holds `{"format", "version", "config", "records"}`.
//!
//! Wall-clock timings are not part of these files; [`write_timings`] puts
//! them in a separate `timings.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::matrix::RunRecord;

pub const RECORDS_CSV: &str = "records.csv";
pub const SCATTER_CSV: &str = "kl_gamma.csv";
pub const REPORT_JSON: &str = "report.json";
pub const TIMINGS_CSV: &str = "timings.csv";

pub const RECORDS_COLUMNS: [&str; 17] = [
    "domain",
    "lambda",
    "tau",
    "branch",
    "depth",
    "budget",
    "prompts",
    "cycles",
    "emitted_tokens",
    "target_context_evals",
    "target_passes",
    "draft_calls",
    "tree_nodes",
    "gamma",
    "kl_estimate",
    "predicted_speedup",
    "losslessness_verified",
];

const REPORT_FORMAT: &str = "treespec-report";
const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    All,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "all" => Ok(Self::All),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub config: Option<ExperimentConfig>,
    pub records: Vec<RunRecord>,
}

impl Report {
    pub fn new(config: Option<ExperimentConfig>, records: Vec<RunRecord>) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            config,
            records,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::harness::corpus::read_text(path)?;
        let report: Report = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unsupported report {} v{}", report.format, report.version),
            });
        }
        Ok(report)
    }
}

/// Writes the selected report files into `out_dir` (created if missing) and
/// returns their paths. Records without verified losslessness are left out.
pub fn emit_report(
    records: &[RunRecord],
    config: Option<&ExperimentConfig>,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let published: Vec<RunRecord> = records
        .iter()
        .filter(|r| r.losslessness_verified)
        .cloned()
        .collect();
    if published.is_empty() {
        return Err(Error::invalid("no verified records to report"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::All) {
        let path = out_dir.join(RECORDS_CSV);
        write_file(&path, records_csv(&published)?)?;
        written.push(path);
        let path = out_dir.join(SCATTER_CSV);
        write_file(&path, scatter_csv(&published)?)?;
        written.push(path);
    }
    if matches!(format, ReportFormat::Json | ReportFormat::All) {
        let path = out_dir.join(REPORT_JSON);
        let report = Report::new(config.cloned(), published);
        let mut json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::invalid(format!("serializing report: {e}")))?;
        json.push('\n');
        write_file(&path, json)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes per-cell wall-clock milliseconds to `timings.csv`.
pub fn write_timings(records: &[RunRecord], out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(["cell", "wall_clock_ms"]).map_err(csv_err)?;
    for r in records {
        w.write_record([r.cell.to_string(), format!("{:.3}", r.wall_clock_ms)])
            .map_err(csv_err)?;
    }
    let path = out_dir.join(TIMINGS_CSV);
    write_file(&path, finish_csv(w)?)?;
    Ok(path)
}

fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(RECORDS_COLUMNS).map_err(csv_err)?;
    for r in records {
        let c = &r.cell;
        let s = &r.stats;
        w.write_record([
            c.domain.to_string(),
            c.lambda.to_string(),
            c.tau.to_string(),
            c.branch.to_string(),
            c.depth.to_string(),
            c.budget.to_string(),
            r.prompts.to_string(),
            s.cycles.to_string(),
            s.emitted_tokens.to_string(),
            s.target_context_evals.to_string(),
            s.target_passes.to_string(),
            s.draft_calls.to_string(),
            s.tree_nodes.to_string(),
            s.gamma.to_string(),
            r.kl_estimate.to_string(),
            r.predicted_speedup.to_string(),
            r.losslessness_verified.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(format!("# treespec records v1\n{}", finish_csv(w)?))
}

fn scatter_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(["kl_estimate", "gamma"]).map_err(csv_err)?;
    for r in records {
        w.write_record([r.kl_estimate.to_string(), r.stats.gamma.to_string()])
            .map_err(csv_err)?;
    }
    Ok(format!("# treespec kl-gamma v1\n{}", finish_csv(w)?))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write_file(path: &Path, contents: String) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
