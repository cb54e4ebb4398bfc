//! Dynamic speculative token trees.
//!
//! The draft model grows a tree from the current context: a node whose
//! draft distribution is peaked (entropy below the policy threshold) gets a
//! single child, an uncertain node gets up to `max_branch` children. The tree
//! is then cut down to the `node_budget` best nodes by cumulative draft
//! log-probability.
//!
//! Nodes are ranked by descending cumulative log-probability, then shallower
//! depth, then lower token id, then lexicographically smaller root path. A
//! node always ranks strictly ahead of its descendants, so the top-`n` set is
//! closed under ancestors and [`build_tree`] can find it best-first without
//! materializing the full tree.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lm::{entropy, Context, Distribution, LanguageModel, TokenId, Vocabulary};

pub type NodeId = usize;

/// Controls tree shape: entropy threshold (nats), branch width for
/// uncertain nodes, depth bound, and the post-pruning node budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchPolicy {
    entropy_threshold: f64,
    max_branch: usize,
    max_depth: usize,
    node_budget: usize,
}

impl BranchPolicy {
    pub fn new(
        entropy_threshold: f64,
        max_branch: usize,
        max_depth: usize,
        node_budget: usize,
    ) -> Result<Self> {
        if entropy_threshold.is_nan() || entropy_threshold < 0.0 {
            return Err(Error::invalid(format!(
                "entropy threshold must be >= 0, got {entropy_threshold}"
            )));
        }
        if max_branch < 1 || max_depth < 1 || node_budget < 1 {
            return Err(Error::invalid(
                "max_branch, max_depth and node_budget must all be >= 1",
            ));
        }
        if max_branch > node_budget {
            return Err(Error::invalid(format!(
                "max_branch {max_branch} exceeds node budget {node_budget}"
            )));
        }
        Ok(Self {
            entropy_threshold,
            max_branch,
            max_depth,
            node_budget,
        })
    }

    /// Linear speculation: one draft token per step, `depth` steps.
    pub fn chain(depth: usize) -> Result<Self> {
        Self::new(f64::INFINITY, 1, depth, depth)
    }

    pub fn entropy_threshold(&self) -> f64 {
        self.entropy_threshold
    }

    pub fn max_branch(&self) -> usize {
        self.max_branch
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node_budget(&self) -> usize {
        self.node_budget
    }
}

/// Number of children to expand under a node with draft distribution `dist`.
pub fn branch_width(dist: &Distribution, policy: &BranchPolicy) -> usize {
    let width = if entropy(dist) < policy.entropy_threshold {
        1
    } else {
        policy.max_branch
    };
    width.min(dist.support_size()).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecNode {
    pub token: TokenId,
    /// `None` for children of the root context.
    pub parent: Option<NodeId>,
    /// Root children have depth 1.
    pub depth: usize,
    pub draft_prob: f64,
    pub cum_logprob: f64,
}

/// A speculative tree. The root is the decoding context itself and is not
/// stored in `nodes`; every node's parent precedes it in `nodes`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecTree {
    context: Vec<TokenId>,
    nodes: Vec<SpecNode>,
    max_depth: usize,
    node_budget: usize,
}

impl SpecTree {
    pub fn context(&self) -> &[TokenId] {
        &self.context
    }

    pub fn nodes(&self) -> &[SpecNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SpecNode {
        &self.nodes[id]
    }

    /// Number of non-root nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node_budget(&self) -> usize {
        self.node_budget
    }

    pub fn children(&self, parent: Option<NodeId>) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.parent == parent)
            .map(|(i, _)| i)
    }

    /// Tokens from the root (exclusive) down to `id` (inclusive).
    pub fn path(&self, id: NodeId) -> Vec<TokenId> {
        let mut path = Vec::with_capacity(self.nodes[id].depth);
        let mut cur = Some(id);
        while let Some(i) = cur {
            path.push(self.nodes[i].token);
            cur = self.nodes[i].parent;
        }
        path.reverse();
        path
    }

    /// Number of nodes with at least one child, plus the root.
    pub fn internal_count(&self) -> usize {
        let parents: HashSet<NodeId> = self.nodes.iter().filter_map(|n| n.parent).collect();
        parents.len() + 1
    }

    /// Checks structural and score invariants, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        let mut siblings = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let (parent_depth, parent_cum) = match n.parent {
                None => (0, 0.0),
                Some(p) if p < i => (self.nodes[p].depth, self.nodes[p].cum_logprob),
                Some(p) => {
                    return Err(Error::invalid(format!(
                        "node {i} has parent {p} that does not precede it"
                    )))
                }
            };
            if n.depth != parent_depth + 1 {
                return Err(Error::invalid(format!("node {i} has depth {}", n.depth)));
            }
            if n.depth > self.max_depth {
                return Err(Error::invalid(format!("node {i} exceeds max depth")));
            }
            if !(n.draft_prob > 0.0 && n.draft_prob <= 1.0) {
                return Err(Error::invalid(format!(
                    "node {i} has draft_prob {}",
                    n.draft_prob
                )));
            }
            if n.cum_logprob != parent_cum + n.draft_prob.ln() {
                return Err(Error::invalid(format!(
                    "node {i} has incoherent cum_logprob"
                )));
            }
            if !siblings.insert((n.parent, n.token)) {
                return Err(Error::invalid(format!(
                    "node {i} duplicates a sibling token"
                )));
            }
        }
        Ok(())
    }

    /// One line per node in depth-first order: two spaces of indentation per
    /// depth level, the token string, its draft probability and cumulative
    /// log-probability.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        let mut stack: Vec<NodeId> = self.children(None).collect();
        stack.reverse();
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            let tok = vocab.token(n.token).unwrap_or("?");
            let _ = writeln!(
                out,
                "{}{:?} p={:.6} cum={:.6}",
                "  ".repeat(n.depth - 1),
                tok,
                n.draft_prob,
                n.cum_logprob
            );
            let mut kids: Vec<NodeId> = self.children(Some(id)).collect();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }
}

/// Full breadth-first expansion to `policy.max_depth`, before any pruning.
///
/// The tree grows geometrically in `max_branch`; the decode loop uses
/// [`build_tree`] instead, which yields the same result as
/// `prune_tree(expand_tree(..))` with far fewer draft calls.
pub fn expand_tree<M: LanguageModel + ?Sized>(
    draft: &M,
    ctx: &Context,
    policy: &BranchPolicy,
) -> Result<SpecTree> {
    let eos = draft.vocab().eos_id();
    let mut tree = SpecTree {
        context: ctx.tokens().to_vec(),
        nodes: Vec::new(),
        max_depth: policy.max_depth,
        node_budget: policy.node_budget,
    };
    if ctx.ends_with(eos) {
        return Ok(tree);
    }
    let mut frontier: Vec<Option<NodeId>> = vec![None];
    let mut scratch = ctx.tokens().to_vec();
    for depth in 1..=policy.max_depth {
        let mut next = Vec::new();
        for parent in frontier {
            scratch.truncate(ctx.len());
            let parent_cum = match parent {
                Some(p) => {
                    scratch.extend(tree.path(p));
                    tree.nodes[p].cum_logprob
                }
                None => 0.0,
            };
            let dist = draft.next_distribution(&scratch)?;
            for (token, prob) in dist.top_k(branch_width(&dist, policy)) {
                tree.nodes.push(SpecNode {
                    token,
                    parent,
                    depth,
                    draft_prob: prob,
                    cum_logprob: parent_cum + prob.ln(),
                });
                if token != eos {
                    next.push(Some(tree.nodes.len() - 1));
                }
            }
        }
        frontier = next;
    }
    Ok(tree)
}

fn rank_order(
    a: (f64, usize, TokenId, &[TokenId]),
    b: (f64, usize, TokenId, &[TokenId]),
) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then_with(|| a.3.cmp(b.3))
}

/// Keeps at most `n` non-root nodes: the best-ranked ones, with ancestors
/// pulled in so the result stays connected. A node whose missing ancestors
/// would overflow the budget is dropped in favour of those already kept.
pub fn prune_tree(tree: &SpecTree, n: usize) -> Result<SpecTree> {
    if n < 1 {
        return Err(Error::invalid("node budget must be >= 1"));
    }
    let paths: Vec<Vec<TokenId>> = (0..tree.len()).map(|i| tree.path(i)).collect();
    let mut order: Vec<NodeId> = (0..tree.len()).collect();
    let key = |i: NodeId| {
        let nd = &tree.nodes[i];
        (nd.cum_logprob, nd.depth, nd.token, paths[i].as_slice())
    };
    order.sort_by(|&a, &b| rank_order(key(a), key(b)));

    let mut kept = vec![false; tree.len()];
    let mut count = 0;
    for &i in &order {
        if count == n {
            break;
        }
        if kept[i] {
            continue;
        }
        let mut missing = vec![i];
        let mut cur = tree.nodes[i].parent;
        while let Some(p) = cur {
            if kept[p] {
                break;
            }
            missing.push(p);
            cur = tree.nodes[p].parent;
        }
        if count + missing.len() <= n {
            for m in missing {
                kept[m] = true;
            }
            count = kept.iter().filter(|&&k| k).count();
        }
    }
    let selected: Vec<NodeId> = (0..tree.len()).filter(|&i| kept[i]).collect();
    Ok(canonical_subtree(tree, &selected, &paths, n))
}

/// Rebuilds `tree` restricted to `selected` (ancestor-closed), ordered by
/// depth and then root path.
fn canonical_subtree(
    tree: &SpecTree,
    selected: &[NodeId],
    paths: &[Vec<TokenId>],
    budget: usize,
) -> SpecTree {
    let mut order = selected.to_vec();
    order.sort_by(|&a, &b| {
        tree.nodes[a]
            .depth
            .cmp(&tree.nodes[b].depth)
            .then_with(|| paths[a].cmp(&paths[b]))
    });
    let mut remap = vec![usize::MAX; tree.len()];
    let mut nodes = Vec::with_capacity(order.len());
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
        let mut node = tree.nodes[old].clone();
        node.parent = node.parent.map(|p| remap[p]);
        nodes.push(node);
    }
    SpecTree {
        context: tree.context.clone(),
        nodes,
        max_depth: tree.max_depth,
        node_budget: budget,
    }
}

/// A tree together with the number of draft distributions it cost.
#[derive(Clone, Debug)]
pub struct BuiltTree {
    pub tree: SpecTree,
    pub draft_calls: usize,
}

enum EntryKind {
    /// Query the draft under an already selected node (or the root).
    Expand { node: Option<NodeId> },
    Candidate {
        token: TokenId,
        parent: Option<NodeId>,
        prob: f64,
    },
}

struct Entry {
    score: f64,
    depth: usize,
    path: Vec<TokenId>,
    kind: EntryKind,
}

impl Entry {
    /// Expansions sort ahead of every candidate they can produce: same
    /// score bound, same child depth, and a token slot below all ids.
    fn token_slot(&self) -> i64 {
        match self.kind {
            EntryKind::Expand { .. } => -1,
            EntryKind::Candidate { token, .. } => i64::from(token),
        }
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; the best-ranked entry must compare greatest.
        self.score
            .total_cmp(&other.score)
            .then(other.depth.cmp(&self.depth))
            .then(other.token_slot().cmp(&self.token_slot()))
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

/// Best-first construction of the pruned tree.
///
/// Produces exactly `prune_tree(&expand_tree(draft, ctx, policy)?, policy.node_budget())`
/// while querying the draft only under nodes that end up mattering.
pub fn build_tree<M: LanguageModel + ?Sized>(
    draft: &M,
    ctx: &Context,
    policy: &BranchPolicy,
) -> Result<BuiltTree> {
    let eos = draft.vocab().eos_id();
    let mut nodes: Vec<SpecNode> = Vec::new();
    let mut paths: Vec<Vec<TokenId>> = Vec::new();
    let mut draft_calls = 0;
    let mut heap = BinaryHeap::new();
    if !ctx.ends_with(eos) {
        heap.push(Entry {
            score: 0.0,
            depth: 1,
            path: Vec::new(),
            kind: EntryKind::Expand { node: None },
        });
    }
    let mut scratch = ctx.tokens().to_vec();
    while nodes.len() < policy.node_budget {
        let Some(entry) = heap.pop() else { break };
        match entry.kind {
            EntryKind::Expand { node } => {
                scratch.truncate(ctx.len());
                scratch.extend_from_slice(&entry.path);
                let dist = draft.next_distribution(&scratch)?;
                draft_calls += 1;
                for (token, prob) in dist.top_k(branch_width(&dist, policy)) {
                    let mut path = entry.path.clone();
                    path.push(token);
                    heap.push(Entry {
                        score: entry.score + prob.ln(),
                        depth: entry.depth,
                        path,
                        kind: EntryKind::Candidate {
                            token,
                            parent: node,
                            prob,
                        },
                    });
                }
            }
            EntryKind::Candidate {
                token,
                parent,
                prob,
            } => {
                let id = nodes.len();
                nodes.push(SpecNode {
                    token,
                    parent,
                    depth: entry.depth,
                    draft_prob: prob,
                    cum_logprob: entry.score,
                });
                paths.push(entry.path.clone());
                if entry.depth < policy.max_depth && token != eos {
                    heap.push(Entry {
                        score: entry.score,
                        depth: entry.depth + 1,
                        path: entry.path,
                        kind: EntryKind::Expand { node: Some(id) },
                    });
                }
            }
        }
    }
    let raw = SpecTree {
        context: ctx.tokens().to_vec(),
        nodes,
        max_depth: policy.max_depth,
        node_budget: policy.node_budget,
    };
    let all: Vec<NodeId> = (0..raw.len()).collect();
    Ok(BuiltTree {
        tree: canonical_subtree(&raw, &all, &paths, policy.node_budget),
        draft_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{HashedModel, OneHotModel};

    struct Uniform(Vocabulary);

    impl LanguageModel for Uniform {
        fn vocab(&self) -> &Vocabulary {
            &self.0
        }
        fn predict(&self, _: &[TokenId]) -> Result<Distribution> {
            Distribution::uniform(self.0.size())
        }
    }

    fn root(v: &Vocabulary) -> Context {
        Context::new(v, vec![v.bos_id()]).unwrap()
    }

    #[test]
    fn branch_width_examples() {
        let p = BranchPolicy::new(1.0, 4, 3, 8).unwrap();
        assert_eq!(branch_width(&Distribution::one_hot(16, 3).unwrap(), &p), 1);
        assert_eq!(branch_width(&Distribution::uniform(16).unwrap(), &p), 4);
        let two = Distribution::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(branch_width(&two, &p), 1);
        // Width never exceeds the support, even when the entropy is high.
        let p0 = BranchPolicy::new(0.0, 4, 3, 8).unwrap();
        assert_eq!(branch_width(&two, &p0), 2);
    }

    #[test]
    fn policy_validation() {
        assert!(BranchPolicy::new(-1.0, 1, 1, 1).is_err());
        assert!(BranchPolicy::new(f64::NAN, 1, 1, 1).is_err());
        assert!(BranchPolicy::new(1.0, 0, 1, 1).is_err());
        assert!(BranchPolicy::new(1.0, 1, 0, 1).is_err());
        assert!(BranchPolicy::new(1.0, 1, 1, 0).is_err());
        assert!(BranchPolicy::new(1.0, 5, 1, 4).is_err());
        assert!(BranchPolicy::new(f64::INFINITY, 4, 1, 4).is_ok());
    }

    #[test]
    fn one_hot_draft_builds_a_chain() {
        let v = Vocabulary::synthetic(5).unwrap();
        let m = OneHotModel::new(v.clone(), 3).unwrap();
        let p = BranchPolicy::new(0.5, 2, 4, 4).unwrap();
        let t = expand_tree(&m, &root(&v), &p).unwrap();
        assert_eq!(t.len(), 4);
        for (i, n) in t.nodes().iter().enumerate() {
            assert_eq!(n.depth, i + 1);
            assert_eq!(n.cum_logprob, 0.0);
            assert_eq!(n.token, 3);
        }
        t.validate().unwrap();
    }

    /// bos and eos sit at the top of the id range so uniform top-2 picks "a", "b".
    fn ab_vocab() -> Vocabulary {
        Vocabulary::new(
            vec!["a".into(), "b".into(), "<bos>".into(), "<eos>".into()],
            2,
            3,
        )
        .unwrap()
    }

    #[test]
    fn uniform_draft_builds_perfect_binary_tree() {
        let v = ab_vocab();
        let p = BranchPolicy::new(0.0, 2, 2, 6).unwrap();
        let t = expand_tree(&Uniform(v.clone()), &root(&v), &p).unwrap();
        t.validate().unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.children(None).count(), 2);
        let expected = 2.0 * 0.25f64.ln();
        let deep: Vec<_> = t.nodes().iter().filter(|n| n.depth == 2).collect();
        assert_eq!(deep.len(), 4);
        for n in deep {
            assert!((n.cum_logprob - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn eos_is_not_expanded() {
        let v = Vocabulary::synthetic(4).unwrap();
        let m = OneHotModel::new(v.clone(), v.eos_id()).unwrap();
        let p = BranchPolicy::new(1.0, 2, 5, 5).unwrap();
        let t = expand_tree(&m, &root(&v), &p).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.node(0).token, v.eos_id());
        let built = build_tree(&m, &root(&v), &p).unwrap();
        assert_eq!(built.tree, t);
        assert_eq!(built.draft_calls, 1);
    }

    #[test]
    fn prune_chain_unchanged() {
        let v = Vocabulary::synthetic(5).unwrap();
        let m = OneHotModel::new(v.clone(), 2).unwrap();
        let t = expand_tree(&m, &root(&v), &BranchPolicy::chain(4).unwrap()).unwrap();
        for n in 4..7 {
            assert_eq!(prune_tree(&t, n).unwrap().nodes(), t.nodes());
        }
        assert!(prune_tree(&t, 0).is_err());
    }

    #[test]
    fn prune_to_one_keeps_best_root_child() {
        let v = Vocabulary::synthetic(6).unwrap();
        let m = HashedModel::new(v.clone(), 3, 2, 2.0).unwrap();
        let t = expand_tree(&m, &root(&v), &BranchPolicy::new(0.0, 3, 3, 3).unwrap()).unwrap();
        let best = t
            .children(None)
            .max_by(|&a, &b| t.node(a).cum_logprob.total_cmp(&t.node(b).cum_logprob))
            .unwrap();
        let p = prune_tree(&t, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.node(0).token, t.node(best).token);
        assert_eq!(p.node(0).depth, 1);
    }

    #[test]
    fn prune_is_idempotent() {
        let v = Vocabulary::synthetic(7).unwrap();
        let m = HashedModel::new(v.clone(), 9, 3, 1.5).unwrap();
        let t = expand_tree(&m, &root(&v), &BranchPolicy::new(0.5, 3, 3, 5).unwrap()).unwrap();
        let once = prune_tree(&t, 5).unwrap();
        assert_eq!(prune_tree(&once, 5).unwrap(), once);
    }

    #[test]
    fn render_is_stable() {
        let v = ab_vocab();
        let p = BranchPolicy::new(0.0, 2, 2, 6).unwrap();
        let t = expand_tree(&Uniform(v.clone()), &root(&v), &p).unwrap();
        let expected = "\
\"a\" p=0.250000 cum=-1.386294
  \"a\" p=0.250000 cum=-2.772589
  \"b\" p=0.250000 cum=-2.772589
\"b\" p=0.250000 cum=-1.386294
  \"a\" p=0.250000 cum=-2.772589
  \"b\" p=0.250000 cum=-2.772589
";
        assert_eq!(t.render(&v), expected);
    }
}
