#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treespec::lm::{AdversarialModel, HashedModel};
use treespec::{
    distill_interpolate, train_ngram, BranchPolicy, Context, LanguageModel, TokenId, Vocabulary,
};

pub const CAPTIONS: &str = include_str!("../../data/captions.txt");

pub fn captions_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/captions.txt")
}

pub fn field_notes_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/field_notes.txt")
}

pub type Model = Box<dyn LanguageModel>;

/// A seeded random target model over `vocab`: either a hashed model or an
/// n-gram trained on a random corpus.
pub fn random_model(vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Model {
    if rng.gen_bool(0.5) {
        let m = HashedModel::new(
            vocab.clone(),
            rng.gen(),
            rng.gen_range(0..=3),
            rng.gen_range(0.0..6.0),
        )
        .unwrap()
        .with_eos_weight(rng.gen_range(0.0..0.5));
        Box::new(m)
    } else {
        let v = vocab.size() as TokenId;
        let len = rng.gen_range(8..60);
        let corpus: Vec<TokenId> = (0..len).map(|_| rng.gen_range(2..v)).collect();
        let order = rng.gen_range(1..=4);
        Box::new(train_ngram(vocab, &corpus, order, rng.gen_range(0.01..1.0)).unwrap())
    }
}

/// A draft for `target`: an independent model, a blend toward the target,
/// an adversary, or an exact copy (built from the same seed).
pub fn random_draft(vocab: &Vocabulary, target_seed: u64, rng: &mut ChaCha8Rng) -> Model {
    let target = || {
        let mut r = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(target_seed);
        random_model(vocab, &mut r)
    };
    match rng.gen_range(0..4) {
        0 => random_model(vocab, rng),
        1 => {
            let other = random_model(vocab, rng);
            Box::new(distill_interpolate(target(), other, rng.gen_range(0.0..=1.0)).unwrap())
        }
        2 => Box::new(AdversarialModel::new(target())),
        _ => target(),
    }
}

pub fn random_policy(rng: &mut ChaCha8Rng, max_depth: usize, max_budget: usize) -> BranchPolicy {
    let b = rng.gen_range(1..=4usize);
    let n = rng.gen_range(b..=max_budget.max(b));
    let d = rng.gen_range(1..=max_depth);
    let tau = match rng.gen_range(0..4) {
        0 => 0.0,
        1 => f64::INFINITY,
        _ => rng.gen_range(0.0..2.5),
    };
    BranchPolicy::new(tau, b, d, n).unwrap()
}

pub fn random_prompt(vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Context {
    let v = vocab.size() as TokenId;
    let len = rng.gen_range(0..6);
    let body: Vec<TokenId> = (0..len).map(|_| rng.gen_range(2..v)).collect();
    Context::with_bos(vocab, &body).unwrap()
}
