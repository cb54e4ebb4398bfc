//! Greedy verification of speculative trees and the lossless decode loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lm::{greedy_token, Context, LanguageModel, TokenId};
use crate::metrics::DecodeStats;
use crate::tree::{build_tree, BranchPolicy, NodeId, SpecTree};

/// Outcome of checking one tree against the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationResult {
    /// Draft tokens the target agreed with, root first.
    pub accepted_tokens: Vec<TokenId>,
    /// The target's own token where agreement stopped. `None` only when the
    /// accepted path ends in eos.
    pub bonus_token: Option<TokenId>,
    /// Distinct contexts the target scored.
    pub nodes_scored: usize,
    /// `accepted_tokens.len()` plus one for the bonus token.
    pub cycle_acceptance: usize,
}

impl VerificationResult {
    /// Accepted tokens followed by the bonus token.
    pub fn emitted(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.accepted_tokens.iter().copied().chain(self.bonus_token)
    }
}

/// Target-only greedy decoding: the reference output.
pub fn greedy_decode<M: LanguageModel + ?Sized>(
    target: &M,
    prompt: &Context,
    max_tokens: usize,
) -> Result<Vec<TokenId>> {
    check_budget(max_tokens)?;
    let eos = target.vocab().eos_id();
    let mut ctx = prompt.tokens().to_vec();
    let mut out = Vec::with_capacity(max_tokens);
    while out.len() < max_tokens {
        let tok = greedy_token(&target.next_distribution(&ctx)?);
        out.push(tok);
        if tok == eos {
            break;
        }
        ctx.push(tok);
    }
    Ok(out)
}

fn check_budget(max_tokens: usize) -> Result<()> {
    if max_tokens < 1 {
        return Err(Error::invalid("max_tokens must be >= 1"));
    }
    Ok(())
}

fn child_with_token(tree: &SpecTree, parent: Option<NodeId>, token: TokenId) -> Option<NodeId> {
    tree.children(parent).find(|&c| tree.node(c).token == token)
}

/// Walks the tree from the root, scoring one context per step and
/// descending while some child carries the target's greedy token.
pub fn verify_tree<M: LanguageModel + ?Sized>(
    target: &M,
    tree: &SpecTree,
) -> Result<VerificationResult> {
    let eos = target.vocab().eos_id();
    let mut ctx = tree.context().to_vec();
    let mut accepted = Vec::new();
    let mut at: Option<NodeId> = None;
    let mut scored = 0;
    loop {
        let want = greedy_token(&target.next_distribution(&ctx)?);
        scored += 1;
        match child_with_token(tree, at, want) {
            Some(child) => {
                accepted.push(want);
                if want == eos {
                    return Ok(finish(accepted, None, scored));
                }
                ctx.push(want);
                at = Some(child);
            }
            None => return Ok(finish(accepted, Some(want), scored)),
        }
    }
}

/// Scores the root and every non-eos node in one parallel pass, then walks
/// the stored greedy tokens. Same result as [`verify_tree`];
/// `nodes_scored` reports every context in the pass.
pub fn verify_tree_batched<M: LanguageModel + ?Sized>(
    target: &M,
    tree: &SpecTree,
) -> Result<VerificationResult> {
    let eos = target.vocab().eos_id();
    let mut slots: Vec<Option<NodeId>> = vec![None];
    slots.extend(
        (0..tree.len())
            .filter(|&i| tree.node(i).token != eos)
            .map(Some),
    );
    let greedy: Vec<TokenId> = slots
        .par_iter()
        .map(|slot| {
            let mut ctx = tree.context().to_vec();
            if let Some(id) = slot {
                ctx.extend(tree.path(*id));
            }
            target.next_distribution(&ctx).map(|d| greedy_token(&d))
        })
        .collect::<Result<_>>()?;
    let greedy_at = |node: Option<NodeId>| {
        let pos = slots
            .iter()
            .position(|&s| s == node)
            .expect("node was scored");
        greedy[pos]
    };

    let mut accepted = Vec::new();
    let mut at: Option<NodeId> = None;
    loop {
        let want = greedy_at(at);
        match child_with_token(tree, at, want) {
            Some(child) => {
                accepted.push(want);
                if want == eos {
                    return Ok(finish(accepted, None, slots.len()));
                }
                at = Some(child);
            }
            None => return Ok(finish(accepted, Some(want), slots.len())),
        }
    }
}

fn finish(accepted: Vec<TokenId>, bonus: Option<TokenId>, scored: usize) -> VerificationResult {
    let cycle_acceptance = accepted.len() + usize::from(bonus.is_some());
    VerificationResult {
        accepted_tokens: accepted,
        bonus_token: bonus,
        nodes_scored: scored,
        cycle_acceptance,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub stats: DecodeStats,
}

/// Draft-and-verify decoding. Emits exactly what [`greedy_decode`] would
/// for the same target, prompt and budget; the draft and policy only change
/// how many cycles that takes.
pub fn speculative_decode<D, T>(
    draft: &D,
    target: &T,
    prompt: &Context,
    max_tokens: usize,
    policy: &BranchPolicy,
) -> Result<DecodeOutput>
where
    D: LanguageModel + ?Sized,
    T: LanguageModel + ?Sized,
{
    check_budget(max_tokens)?;
    if draft.vocab() != target.vocab() {
        return Err(Error::invalid(
            "draft and target use different vocabularies",
        ));
    }
    let vocab = target.vocab();
    let eos = vocab.eos_id();
    if prompt.ends_with(eos) {
        return Err(Error::invalid("prompt already ends in eos"));
    }

    let mut ctx = prompt.clone();
    let mut out: Vec<TokenId> = Vec::with_capacity(max_tokens);
    let mut stats = DecodeStats::default();
    while out.len() < max_tokens && out.last() != Some(&eos) {
        let built = build_tree(draft, &ctx, policy)?;
        let result = verify_tree(target, &built.tree)?;
        let room = max_tokens - out.len();
        let before = out.len();
        out.extend(result.emitted().take(room));
        let emitted = &out[before..];
        stats.record_cycle(
            emitted.len(),
            result.nodes_scored,
            built.draft_calls,
            built.tree.len(),
        );
        if out.len() < max_tokens && out.last() != Some(&eos) {
            let mut next = ctx.tokens().to_vec();
            next.extend_from_slice(emitted);
            ctx = Context::new(vocab, next)?;
        }
    }
    Ok(DecodeOutput { tokens: out, stats })
}
