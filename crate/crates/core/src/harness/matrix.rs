use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::corpus::{read_text, sample_contexts, split_holdout};
use crate::lm::{
    distill_interpolate, train_ngram, Context, Interpolated, NGramModel, TokenId, Vocabulary,
};
use crate::metrics::{estimate_kl, predicted_speedup, DecodeStats};
use crate::tree::BranchPolicy;
use crate::verify::{greedy_decode, speculative_decode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    InDomain,
    OutOfDomain,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::InDomain => "in_domain",
            Domain::OutOfDomain => "out_of_domain",
        })
    }
}

/// Identifies one (domain, lambda, policy) cell of the matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub domain: Domain,
    pub lambda: f64,
    pub tau: f64,
    pub branch: usize,
    pub depth: usize,
    pub budget: usize,
}

impl CellKey {
    fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.domain
            .cmp(&other.domain)
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.tau.total_cmp(&other.tau))
            .then(self.branch.cmp(&other.branch))
            .then(self.depth.cmp(&other.depth))
            .then(self.budget.cmp(&other.budget))
    }

    pub fn policy(&self) -> Result<BranchPolicy> {
        BranchPolicy::new(self.tau, self.branch, self.depth, self.budget)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/lambda={}/tau={}/b={}/d={}/n={}",
            self.domain, self.lambda, self.tau, self.branch, self.depth, self.budget
        )
    }
}

/// Pooled decode counters for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub cycles: usize,
    pub emitted_tokens: usize,
    pub target_context_evals: usize,
    pub target_passes: usize,
    pub draft_calls: usize,
    pub tree_nodes: usize,
    pub gamma: f64,
}

impl From<&DecodeStats> for RunStats {
    fn from(s: &DecodeStats) -> Self {
        Self {
            cycles: s.cycles,
            emitted_tokens: s.emitted_tokens,
            target_context_evals: s.target_context_evals,
            target_passes: s.target_passes,
            draft_calls: s.draft_calls,
            tree_nodes: s.tree_nodes,
            gamma: s.gamma,
        }
    }
}

impl RunStats {
    pub fn draft_calls_per_cycle(&self) -> f64 {
        self.draft_calls as f64 / self.cycles.max(1) as f64
    }

    pub fn tree_nodes_per_cycle(&self) -> f64 {
        self.tree_nodes as f64 / self.cycles.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: CellKey,
    pub prompts: usize,
    pub stats: RunStats,
    pub kl_estimate: f64,
    pub predicted_speedup: f64,
    /// Informational only; kept out of the deterministic reports.
    #[serde(skip)]
    pub wall_clock_ms: f64,
    pub losslessness_verified: bool,
}

/// Prompts and KL probes for one domain.
#[derive(Clone, Debug)]
pub struct DomainSet {
    pub domain: Domain,
    pub prompts: Vec<Context>,
    pub probes: Vec<Context>,
}

/// Trained models plus sampled prompts, shared by every cell of a run.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub vocab: Vocabulary,
    pub target: NGramModel,
    pub draft_base: NGramModel,
    pub domains: Vec<DomainSet>,
}

impl Experiment {
    /// Reads corpora, trains both models on the training split of the
    /// in-domain corpus, and samples prompts and probes.
    ///
    /// The held-out tail of each corpus is halved: prompts come from the
    /// first half, probes from the second. The out-of-domain corpus is
    /// entirely held out.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let text = read_text(&config.corpus_path)?;
        let ood_text = config
            .ood_corpus_path
            .as_deref()
            .map(read_text)
            .transpose()?;
        let mut vocab = Vocabulary::from_chars(&text);
        if let Some(t) = &ood_text {
            vocab.extend_chars(t);
        }
        let tokens = vocab.encode(&text)?;
        let (train, held) = split_holdout(&tokens, config.holdout_fraction);
        let target = train_ngram(&vocab, train, config.target_order, config.target_smoothing)?;
        let draft_base = train_ngram(&vocab, train, config.draft_order, config.draft_smoothing)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut domains = vec![sample_domain(
            config,
            &vocab,
            Domain::InDomain,
            held,
            &mut rng,
        )?];
        if let Some(t) = &ood_text {
            let ood = vocab.encode(t)?;
            domains.push(sample_domain(
                config,
                &vocab,
                Domain::OutOfDomain,
                &ood,
                &mut rng,
            )?);
        }
        Ok(Self {
            config: config.clone(),
            vocab,
            target,
            draft_base,
            domains,
        })
    }

    pub fn draft(&self, lambda: f64) -> Result<Interpolated<&NGramModel, &NGramModel>> {
        distill_interpolate(&self.target, &self.draft_base, lambda)
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for set in &self.domains {
            for &lambda in &self.config.lambda_grid {
                for p in self.config.policies() {
                    cells.push(CellKey {
                        domain: set.domain,
                        lambda,
                        tau: p.entropy_threshold(),
                        branch: p.max_branch(),
                        depth: p.max_depth(),
                        budget: p.node_budget(),
                    });
                }
            }
        }
        cells
    }

    /// Target-only greedy outputs for every prompt of every domain.
    pub fn baselines(&self) -> Result<Vec<Vec<Vec<TokenId>>>> {
        self.domains
            .iter()
            .map(|set| {
                set.prompts
                    .par_iter()
                    .map(|p| greedy_decode(&self.target, p, self.config.max_tokens))
                    .collect()
            })
            .collect()
    }

    /// Runs every cell (cells in parallel, prompts within a cell in order)
    /// and returns records sorted by cell key.
    pub fn run(&self) -> Result<Vec<RunRecord>> {
        let baselines = self.baselines()?;
        let mut records = self
            .cells()
            .par_iter()
            .map(|cell| {
                let d = self
                    .domains
                    .iter()
                    .position(|s| s.domain == cell.domain)
                    .expect("cell domain comes from domain list");
                self.run_cell(cell, &self.domains[d], &baselines[d])
            })
            .collect::<Result<Vec<_>>>()?;
        records.sort_by(|a, b| a.cell.sort_cmp(&b.cell));
        Ok(records)
    }

    fn run_cell(
        &self,
        cell: &CellKey,
        set: &DomainSet,
        baselines: &[Vec<TokenId>],
    ) -> Result<RunRecord> {
        let started = Instant::now();
        let policy = cell.policy()?;
        let draft = self.draft(cell.lambda)?;
        let kl = estimate_kl(&draft, &self.target, &set.probes, self.config.kl_direction)?;
        let mut stats = DecodeStats::default();
        for (i, (prompt, baseline)) in set.prompts.iter().zip(baselines).enumerate() {
            let out = speculative_decode(
                &draft,
                &self.target,
                prompt,
                self.config.max_tokens,
                &policy,
            )?;
            if &out.tokens != baseline {
                let position = out
                    .tokens
                    .iter()
                    .zip(baseline)
                    .position(|(a, b)| a != b)
                    .unwrap_or_else(|| out.tokens.len().min(baseline.len()));
                return Err(Error::Losslessness {
                    seed: self.config.seed,
                    cell: cell.to_string(),
                    prompt: i,
                    position,
                });
            }
            stats.merge(&out.stats);
        }
        let stats = RunStats::from(&stats);
        let speedup = predicted_speedup(
            stats.gamma,
            &self.config.cost,
            stats.draft_calls_per_cycle(),
        )?;
        Ok(RunRecord {
            cell: *cell,
            prompts: set.prompts.len(),
            stats,
            kl_estimate: kl,
            predicted_speedup: speedup,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
            losslessness_verified: true,
        })
    }
}

fn sample_domain(
    config: &ExperimentConfig,
    vocab: &Vocabulary,
    domain: Domain,
    held: &[TokenId],
    rng: &mut ChaCha8Rng,
) -> Result<DomainSet> {
    let (prompt_region, probe_region) = held.split_at(held.len() / 2);
    let prompts = sample_contexts(
        vocab,
        prompt_region,
        config.prompt_count,
        config.prompt_len,
        config.prompt_len,
        rng,
    )
    .map_err(|e| Error::invalid(format!("{domain} prompts: {e}")))?;
    let probes = sample_contexts(
        vocab,
        probe_region,
        config.probe_count,
        1,
        config.prompt_len,
        rng,
    )
    .map_err(|e| Error::invalid(format!("{domain} probes: {e}")))?;
    Ok(DomainSet {
        domain,
        prompts,
        probes,
    })
}

/// Builds the experiment and runs every cell.
pub fn run_matrix(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Experiment::prepare(config)?.run()
}
