//! Decode statistics, draft-target divergence, and the call-count cost model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{kl_divergence, Context, LanguageModel};

/// Per-run accounting for speculative decoding.
///
/// `target_context_evals` counts distinct contexts the target scored while
/// walking the tree; `target_passes` counts batched verification passes (one
/// per cycle). `per_cycle_acceptance` holds tokens actually emitted per
/// cycle, after truncation to the token budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub cycles: usize,
    pub emitted_tokens: usize,
    pub target_context_evals: usize,
    pub target_passes: usize,
    pub draft_calls: usize,
    pub tree_nodes: usize,
    pub per_cycle_acceptance: Vec<usize>,
    pub gamma: f64,
}

impl DecodeStats {
    pub(crate) fn record_cycle(
        &mut self,
        emitted: usize,
        target_evals: usize,
        draft_calls: usize,
        tree_nodes: usize,
    ) {
        self.cycles += 1;
        self.target_passes += 1;
        self.emitted_tokens += emitted;
        self.target_context_evals += target_evals;
        self.draft_calls += draft_calls;
        self.tree_nodes += tree_nodes;
        self.per_cycle_acceptance.push(emitted);
        self.gamma = self.emitted_tokens as f64 / self.cycles as f64;
    }

    /// Pools another run's cycles into this one.
    pub fn merge(&mut self, other: &DecodeStats) {
        self.cycles += other.cycles;
        self.emitted_tokens += other.emitted_tokens;
        self.target_context_evals += other.target_context_evals;
        self.target_passes += other.target_passes;
        self.draft_calls += other.draft_calls;
        self.tree_nodes += other.tree_nodes;
        self.per_cycle_acceptance
            .extend_from_slice(&other.per_cycle_acceptance);
        self.gamma = if self.cycles == 0 {
            0.0
        } else {
            self.emitted_tokens as f64 / self.cycles as f64
        };
    }

    pub fn draft_calls_per_cycle(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.draft_calls as f64 / self.cycles as f64
        }
    }

    pub fn tree_nodes_per_cycle(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.tree_nodes as f64 / self.cycles as f64
        }
    }
}

/// Average tokens emitted per cycle (the acceptance length, gamma).
pub fn mean_acceptance(stats: &DecodeStats) -> Result<f64> {
    if stats.per_cycle_acceptance.is_empty() {
        return Err(Error::invalid("no cycles recorded"));
    }
    let total: usize = stats.per_cycle_acceptance.iter().sum();
    Ok(total as f64 / stats.per_cycle_acceptance.len() as f64)
}

/// Which distribution plays `p` in `KL(p || q)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(target || draft)`.
    #[default]
    TargetDraft,
    /// `KL(draft || target)`.
    DraftTarget,
}

impl std::str::FromStr for KlDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_draft" => Ok(Self::TargetDraft),
            "draft_target" => Ok(Self::DraftTarget),
            other => Err(Error::invalid(format!(
                "kl direction must be target_draft or draft_target, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for KlDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TargetDraft => "target_draft",
            Self::DraftTarget => "draft_target",
        })
    }
}

/// Mean divergence between draft and target over `probes`.
pub fn estimate_kl<D, T>(
    draft: &D,
    target: &T,
    probes: &[Context],
    direction: KlDirection,
) -> Result<f64>
where
    D: LanguageModel + ?Sized,
    T: LanguageModel + ?Sized,
{
    if probes.is_empty() {
        return Err(Error::invalid("probe set is empty"));
    }
    if draft.vocab() != target.vocab() {
        return Err(Error::invalid(
            "draft and target use different vocabularies",
        ));
    }
    let mut total = 0.0;
    for ctx in probes {
        let d = draft.next_distribution(ctx.tokens())?;
        let t = target.next_distribution(ctx.tokens())?;
        total += match direction {
            KlDirection::TargetDraft => kl_divergence(&t, &d)?,
            KlDirection::DraftTarget => kl_divergence(&d, &t)?,
        };
    }
    Ok(total / probes.len() as f64)
}

/// Relative costs in units of one single-context target call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// One draft distribution call.
    pub draft_cost: f64,
    /// One batched tree-verification pass.
    pub batch_cost: f64,
}

impl CostModel {
    pub fn new(draft_cost: f64, batch_cost: f64) -> Result<Self> {
        let model = Self {
            draft_cost,
            batch_cost,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if !(self.draft_cost.is_finite() && self.draft_cost >= 0.0) {
            return Err(Error::invalid(format!(
                "draft cost must be finite and >= 0, got {}",
                self.draft_cost
            )));
        }
        if !(self.batch_cost.is_finite() && self.batch_cost >= 1.0) {
            return Err(Error::invalid(format!(
                "batch cost must be finite and >= 1, got {}",
                self.batch_cost
            )));
        }
        Ok(())
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            draft_cost: 0.05,
            batch_cost: 1.0,
        }
    }
}

/// Modelled speedup over target-only greedy decoding:
/// `gamma / (batch_cost + draft_cost * draft_calls_per_cycle)`.
///
/// This is an analytic figure in target-call units, not a timing.
pub fn predicted_speedup(gamma: f64, cost: &CostModel, draft_calls_per_cycle: f64) -> Result<f64> {
    cost.check()?;
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
    }
    if !(draft_calls_per_cycle >= 0.0 && draft_calls_per_cycle.is_finite()) {
        return Err(Error::invalid("draft calls per cycle must be >= 0"));
    }
    Ok(gamma / (cost.batch_cost + cost.draft_cost * draft_calls_per_cycle))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid(
            "spearman needs two equal-length series of >= 2 points",
        ));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman undefined for a constant series"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
