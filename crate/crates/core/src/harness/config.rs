//! Experiment configuration.
//!
//! The file format is flat `key = value` lines. `#` starts a comment, blank
//! lines are ignored, list values are comma separated, and relative paths are
//! resolved against the directory holding the config file.
//!
//! | key                | type          | default        |
//! |--------------------|---------------|----------------|
//! | `corpus_path`      | path          | required       |
//! | `ood_corpus_path`  | path          | none           |
//! | `target_order`     | int >= 1      | 4              |
//! | `draft_order`      | int >= 1      | 2              |
//! | `target_smoothing` | real >= 0     | 0.01           |
//! | `draft_smoothing`  | real >= 0     | 0.5            |
//! | `lambda_grid`      | reals in [0,1]| 0,0.25,0.5,0.75,1 |
//! | `tau_grid`         | reals >= 0    | 1.0            |
//! | `branch_grid`      | ints >= 1     | 1,4            |
//! | `depth_grid`       | ints >= 1     | 6              |
//! | `budget_grid`      | ints >= 1     | 6              |
//! | `prompt_count`     | int >= 1      | 200            |
//! | `prompt_len`       | int >= 1      | 16             |
//! | `probe_count`      | int >= 1      | 100            |
//! | `max_tokens`       | int >= 1      | 48             |
//! | `holdout_fraction` | real in (0,1) | 0.2            |
//! | `seed`             | u64           | 0              |
//! | `kl_direction`     | `target_draft` or `draft_target` | `target_draft` |
//! | `draft_cost`       | real >= 0     | 0.05           |
//! | `batch_cost`       | real >= 1     | 1.0            |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::corpus::read_text;
use crate::metrics::{CostModel, KlDirection};
use crate::tree::BranchPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus_path: PathBuf,
    pub ood_corpus_path: Option<PathBuf>,
    pub target_order: usize,
    pub draft_order: usize,
    pub target_smoothing: f64,
    pub draft_smoothing: f64,
    pub lambda_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub branch_grid: Vec<usize>,
    pub depth_grid: Vec<usize>,
    pub budget_grid: Vec<usize>,
    pub prompt_count: usize,
    pub prompt_len: usize,
    pub probe_count: usize,
    pub max_tokens: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub kl_direction: KlDirection,
    pub cost: CostModel,
}

impl ExperimentConfig {
    pub fn new(corpus_path: impl Into<PathBuf>) -> Self {
        Self {
            corpus_path: corpus_path.into(),
            ood_corpus_path: None,
            target_order: 4,
            draft_order: 2,
            target_smoothing: 0.01,
            draft_smoothing: 0.5,
            lambda_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tau_grid: vec![1.0],
            branch_grid: vec![1, 4],
            depth_grid: vec![6],
            budget_grid: vec![6],
            prompt_count: 200,
            prompt_len: 16,
            probe_count: 100,
            max_tokens: 48,
            holdout_fraction: 0.2,
            seed: 0,
            kl_direction: KlDirection::TargetDraft,
            cost: CostModel::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::InvalidInput(message) => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut corpus: Option<PathBuf> = None;
        let mut cfg = Self::new(PathBuf::new());
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::invalid(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key {key}")));
            }
            let path = |v: &str| {
                let p = PathBuf::from(v);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            };
            match key {
                "corpus_path" => corpus = Some(path(value)),
                "ood_corpus_path" => cfg.ood_corpus_path = Some(path(value)),
                "target_order" => cfg.target_order = scalar(value).map_err(at)?,
                "draft_order" => cfg.draft_order = scalar(value).map_err(at)?,
                "target_smoothing" => cfg.target_smoothing = scalar(value).map_err(at)?,
                "draft_smoothing" => cfg.draft_smoothing = scalar(value).map_err(at)?,
                "lambda_grid" => cfg.lambda_grid = list(value).map_err(at)?,
                "tau_grid" => cfg.tau_grid = list(value).map_err(at)?,
                "branch_grid" => cfg.branch_grid = list(value).map_err(at)?,
                "depth_grid" => cfg.depth_grid = list(value).map_err(at)?,
                "budget_grid" => cfg.budget_grid = list(value).map_err(at)?,
                "prompt_count" => cfg.prompt_count = scalar(value).map_err(at)?,
                "prompt_len" => cfg.prompt_len = scalar(value).map_err(at)?,
                "probe_count" => cfg.probe_count = scalar(value).map_err(at)?,
                "max_tokens" => cfg.max_tokens = scalar(value).map_err(at)?,
                "holdout_fraction" => cfg.holdout_fraction = scalar(value).map_err(at)?,
                "seed" => cfg.seed = scalar(value).map_err(at)?,
                "kl_direction" => {
                    cfg.kl_direction = value.parse().map_err(|e: Error| at(e.to_string()))?
                }
                "draft_cost" => cfg.cost.draft_cost = scalar(value).map_err(at)?,
                "batch_cost" => cfg.cost.batch_cost = scalar(value).map_err(at)?,
                other => return Err(at(format!("unknown key {other}"))),
            }
        }
        cfg.corpus_path =
            corpus.ok_or_else(|| Error::invalid("missing required key corpus_path"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_order < 1 || self.draft_order < 1 {
            return Err(Error::invalid("n-gram orders must be >= 1"));
        }
        for (name, a) in [
            ("target_smoothing", self.target_smoothing),
            ("draft_smoothing", self.draft_smoothing),
        ] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if self.lambda_grid.is_empty()
            || self.tau_grid.is_empty()
            || self.branch_grid.is_empty()
            || self.depth_grid.is_empty()
            || self.budget_grid.is_empty()
        {
            return Err(Error::invalid("every grid must be non-empty"));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::invalid(format!("lambda {l} outside [0, 1]")));
        }
        if let Some(t) = self
            .tau_grid
            .iter()
            .find(|t| !(t.is_finite() && **t >= 0.0))
        {
            return Err(Error::invalid(format!("tau {t} must be finite and >= 0")));
        }
        if self.policies().is_empty() {
            return Err(Error::invalid(
                "policy grid has no valid (tau, b, d, n) combination",
            ));
        }
        if self.prompt_count < 1 || self.prompt_len < 1 || self.probe_count < 1 {
            return Err(Error::invalid(
                "prompt_count, prompt_len and probe_count must be >= 1",
            ));
        }
        if self.max_tokens < 1 {
            return Err(Error::invalid("max_tokens must be >= 1"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must lie in (0, 1)"));
        }
        CostModel::new(self.cost.draft_cost, self.cost.batch_cost)?;
        Ok(())
    }

    /// Every valid policy in the grid, in grid order. Combinations with
    /// `b > n` are skipped.
    pub fn policies(&self) -> Vec<BranchPolicy> {
        let mut out = Vec::new();
        for &tau in &self.tau_grid {
            for &b in &self.branch_grid {
                for &d in &self.depth_grid {
                    for &n in &self.budget_grid {
                        if let Ok(p) = BranchPolicy::new(tau, b, d, n) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    /// Renders the config back into the key-value format.
    pub fn to_text(&self) -> String {
        let join = |xs: &[String]| xs.join(", ");
        let f = |xs: &[f64]| join(&xs.iter().map(f64::to_string).collect::<Vec<_>>());
        let u = |xs: &[usize]| join(&xs.iter().map(usize::to_string).collect::<Vec<_>>());
        let mut s = String::new();
        let _ = writeln!(s, "corpus_path = {}", self.corpus_path.display());
        if let Some(p) = &self.ood_corpus_path {
            let _ = writeln!(s, "ood_corpus_path = {}", p.display());
        }
        let _ = writeln!(s, "target_order = {}", self.target_order);
        let _ = writeln!(s, "draft_order = {}", self.draft_order);
        let _ = writeln!(s, "target_smoothing = {}", self.target_smoothing);
        let _ = writeln!(s, "draft_smoothing = {}", self.draft_smoothing);
        let _ = writeln!(s, "lambda_grid = {}", f(&self.lambda_grid));
        let _ = writeln!(s, "tau_grid = {}", f(&self.tau_grid));
        let _ = writeln!(s, "branch_grid = {}", u(&self.branch_grid));
        let _ = writeln!(s, "depth_grid = {}", u(&self.depth_grid));
        let _ = writeln!(s, "budget_grid = {}", u(&self.budget_grid));
        let _ = writeln!(s, "prompt_count = {}", self.prompt_count);
        let _ = writeln!(s, "prompt_len = {}", self.prompt_len);
        let _ = writeln!(s, "probe_count = {}", self.probe_count);
        let _ = writeln!(s, "max_tokens = {}", self.max_tokens);
        let _ = writeln!(s, "holdout_fraction = {}", self.holdout_fraction);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "kl_direction = {}", self.kl_direction);
        let _ = writeln!(s, "draft_cost = {}", self.cost.draft_cost);
        let _ = writeln!(s, "batch_cost = {}", self.cost.batch_cost);
        s
    }
}

fn scalar<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("cannot parse {value:?}: {e}"))
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(scalar)
        .collect()
}
