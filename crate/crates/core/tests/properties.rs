mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treespec::harness::{ingest_text, Experiment, ExperimentConfig};
use treespec::lm::ngram::NGramModel;
use treespec::metrics::{predicted_speedup, CostModel, KlDirection};
use treespec::{
    estimate_kl, greedy_decode, greedy_token, kl_divergence, speculative_decode, train_ngram,
    BranchPolicy, Distribution, LanguageModel, TokenId, Vocabulary,
};

use common::*;

fn setup(seed: u64) -> (Vocabulary, Model, Model, treespec::Context) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::synthetic(rand::Rng::gen_range(&mut rng, 3..=9)).unwrap();
    let target_seed: u64 = rand::Rng::gen(&mut rng);
    let target = random_model(&vocab, &mut ChaCha8Rng::seed_from_u64(target_seed));
    let draft = random_draft(&vocab, target_seed, &mut rng);
    let prompt = random_prompt(&vocab, &mut rng);
    (vocab, target, draft, prompt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn output_is_independent_of_policy(
        seed in any::<u64>(),
        tau in 0.0f64..3.0,
        b in 1usize..5,
        d in 1usize..7,
        extra in 0usize..8,
        max_tokens in 1usize..50,
    ) {
        let (_, target, draft, prompt) = setup(seed);
        let policy = BranchPolicy::new(tau, b, d, b + extra).unwrap();
        let chain = BranchPolicy::chain(d).unwrap();
        let a = speculative_decode(&draft, &target, &prompt, max_tokens, &policy).unwrap();
        let c = speculative_decode(&draft, &target, &prompt, max_tokens, &chain).unwrap();
        let base = greedy_decode(&target, &prompt, max_tokens).unwrap();
        prop_assert_eq!(&a.tokens, &base);
        prop_assert_eq!(&c.tokens, &base);

        // Accounting and acceptance bounds.
        for stats in [&a.stats, &c.stats] {
            prop_assert_eq!(stats.emitted_tokens, stats.per_cycle_acceptance.iter().sum::<usize>());
            prop_assert_eq!(stats.emitted_tokens, base.len());
            prop_assert!(stats.gamma >= 1.0);
            prop_assert!(stats.per_cycle_acceptance.iter().all(|&x| x >= 1 && x <= d + 1));
            prop_assert!(stats.cycles <= max_tokens);
        }
        prop_assert_eq!(c.stats.target_passes, c.stats.cycles);
    }

    #[test]
    fn greedy_is_invariant_to_rescaling(
        scores in prop::collection::vec(0u32..1000, 2..40),
        scale in 1u32..1000,
    ) {
        prop_assume!(scores.iter().any(|&s| s > 0));
        let raw: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
        let scaled: Vec<f64> = raw.iter().map(|s| s * f64::from(scale)).collect();
        let a = Distribution::from_scores(&raw).unwrap();
        let b = Distribution::from_scores(&scaled).unwrap();
        prop_assert_eq!(greedy_token(&a), greedy_token(&b));
    }

    #[test]
    fn kl_is_non_negative(seed in any::<u64>()) {
        let (vocab, target, draft, prompt) = setup(seed);
        let p = target.next_distribution(prompt.tokens()).unwrap();
        let q = draft.next_distribution(prompt.tokens()).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(p.len(), vocab.size());
    }

    #[test]
    fn ngram_json_round_trips(
        corpus in prop::collection::vec(2u32..7, 1..80),
        order in 1usize..4,
        alpha in 0.0f64..2.0,
    ) {
        prop_assume!(corpus.len() >= order);
        let vocab = Vocabulary::synthetic(7).unwrap();
        let m = train_ngram(&vocab, &corpus, order, alpha).unwrap();
        let back = NGramModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        let ctx: Vec<TokenId> = std::iter::once(0).chain(corpus.iter().copied().take(5)).collect();
        prop_assert_eq!(
            back.next_distribution(&ctx).unwrap().probs().to_vec(),
            m.next_distribution(&ctx).unwrap().probs().to_vec()
        );
    }

    #[test]
    fn speedup_is_monotone(
        g in 1.0f64..8.0, dg in 0.01f64..2.0,
        c in 0.0f64..0.5, dc in 0.01f64..0.5,
        t in 1.0f64..3.0, dt in 0.01f64..1.0,
        calls in 0.5f64..20.0,
    ) {
        let s = |g, c, t| predicted_speedup(g, &CostModel::new(c, t).unwrap(), calls).unwrap();
        prop_assert!(s(g + dg, c, t) > s(g, c, t));
        prop_assert!(s(g, c + dc, t) < s(g, c, t));
        prop_assert!(s(g, c, t + dt) < s(g, c, t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Mean KL(interp || target) over a 100-context probe set never rises with lambda.
    #[test]
    fn kl_decreases_along_lambda_grid(seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::new(captions_path());
        cfg.probe_count = 100;
        cfg.prompt_count = 1;
        cfg.seed = seed;
        let exp = Experiment::prepare(&cfg).unwrap();
        let probes = &exp.domains[0].probes;
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let draft = exp.draft(lambda).unwrap();
            let kl = estimate_kl(&draft, &exp.target, probes, KlDirection::TargetDraft).unwrap();
            prop_assert!(kl <= last, "lambda {} kl {} > {}", lambda, kl, last);
            last = kl;
        }
        prop_assert_eq!(last, 0.0);
    }
}

#[test]
fn captions_ngram_emits_valid_distributions() {
    let c = ingest_text(CAPTIONS);
    let m = train_ngram(&c.vocab, &c.tokens, 4, 0.01).unwrap();
    for start in (0..c.tokens.len() - 10).step_by(97) {
        let mut ctx = vec![c.vocab.bos_id()];
        ctx.extend_from_slice(&c.tokens[start..start + 7]);
        let d = m.next_distribution(&ctx).unwrap();
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(d.probs().iter().all(|&p| p >= 0.0));
    }
}
