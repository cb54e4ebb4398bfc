//! `treespec` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 losslessness violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use treespec::harness::{
    emit_report, ingest_corpus, write_timings, Experiment, ExperimentConfig, Report, ReportFormat,
};
use treespec::metrics::predicted_speedup;
use treespec::{
    distill_interpolate, greedy_decode, speculative_decode, train_ngram, BranchPolicy, Context,
    Error, LanguageModel, NGramModel,
};

const TARGET_FILE: &str = "target.json";
const DRAFT_FILE: &str = "draft.json";

#[derive(Parser)]
#[command(
    name = "treespec",
    version,
    about = "Lossless tree-based speculative decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train target and draft n-gram models from a corpus and save them.
    Train(TrainArgs),
    /// Decode one prompt speculatively and print tokens and statistics.
    Decode(DecodeArgs),
    /// Run the benchmark matrix described by a config file.
    Bench(BenchArgs),
    /// Re-emit CSV/JSON reports from a saved report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct ModelSource {
    /// Experiment config; supplies corpus path, orders and smoothing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training corpus (UTF-8 text); overrides the config's corpus_path.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl ModelSource {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::new(PathBuf::new()),
        };
        if let Some(corpus) = &self.corpus {
            cfg.corpus_path = corpus.clone();
        }
        if cfg.corpus_path.as_os_str().is_empty() {
            return Err(Error::InvalidInput(
                "either --corpus or --config is required".into(),
            ));
        }
        Ok(cfg)
    }

    fn train(&self) -> Result<(NGramModel, NGramModel), Error> {
        let cfg = self.config()?;
        let corpus = ingest_corpus(&cfg.corpus_path)?;
        let target = train_ngram(
            &corpus.vocab,
            &corpus.tokens,
            cfg.target_order,
            cfg.target_smoothing,
        )?;
        let draft = train_ngram(
            &corpus.vocab,
            &corpus.tokens,
            cfg.draft_order,
            cfg.draft_smoothing,
        )?;
        Ok((target, draft))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Directory for target.json and draft.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Directory written by `train`; used instead of training on the fly.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    prompt: String,
    /// Blend weight of the target inside the draft, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Entropy threshold in nats below which a node gets a single child.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 4)]
    branch: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 6)]
    budget: usize,
    #[arg(long, default_value_t = 48)]
    max_tokens: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's corpus_path.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Overrides the config's max_tokens.
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// csv, json, or all.
    #[arg(long, default_value = "all")]
    format: String,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `bench`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// csv, json, or all.
    #[arg(long, default_value = "csv")]
    format: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Decode(a) => decode(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => 1,
        Error::Io { .. } | Error::Format { .. } => 2,
        Error::Losslessness { .. } => 3,
    }
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let (target, draft) = args.source.train()?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    target.save(&args.out.join(TARGET_FILE))?;
    draft.save(&args.out.join(DRAFT_FILE))?;
    println!(
        "vocabulary: {} tokens\ntarget: order {}, {} contexts\ndraft: order {}, {} contexts\nwrote {}",
        target.vocab().size(),
        target.order(),
        target.context_count(),
        draft.order(),
        draft.context_count(),
        args.out.display()
    );
    Ok(())
}

fn load_models(args: &DecodeArgs) -> Result<(NGramModel, NGramModel), Error> {
    match &args.model_dir {
        Some(dir) => Ok((
            NGramModel::load(&dir.join(TARGET_FILE))?,
            NGramModel::load(&dir.join(DRAFT_FILE))?,
        )),
        None => args.source.train(),
    }
}

fn decode(args: DecodeArgs) -> Result<(), Error> {
    let (target, base) = load_models(&args)?;
    let vocab = target.vocab().clone();
    let draft = distill_interpolate(&target, &base, args.lambda)?;
    let policy = BranchPolicy::new(args.tau, args.branch, args.depth, args.budget)?;
    let prompt = Context::from_text(&vocab, &args.prompt)?;
    let out = speculative_decode(&draft, &target, &prompt, args.max_tokens, &policy)?;
    let baseline = greedy_decode(&target, &prompt, args.max_tokens)?;
    if out.tokens != baseline {
        let position = out
            .tokens
            .iter()
            .zip(&baseline)
            .position(|(a, b)| a != b)
            .unwrap_or(out.tokens.len().min(baseline.len()));
        return Err(Error::Losslessness {
            seed: 0,
            cell: format!("decode/lambda={}", args.lambda),
            prompt: 0,
            position,
        });
    }
    let s = &out.stats;
    let speedup = predicted_speedup(s.gamma, &Default::default(), s.draft_calls_per_cycle())?;
    println!("text: {:?}", vocab.decode(&out.tokens));
    println!("tokens: {:?}", out.tokens);
    println!("cycles: {}", s.cycles);
    println!("emitted_tokens: {}", s.emitted_tokens);
    println!("gamma: {:.4}", s.gamma);
    println!("per_cycle_acceptance: {:?}", s.per_cycle_acceptance);
    println!("draft_calls: {}", s.draft_calls);
    println!("target_context_evals: {}", s.target_context_evals);
    println!("predicted_speedup: {speedup:.4}");
    println!("lossless: true");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Error> {
    let format: ReportFormat = args.format.parse()?;
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(corpus) = args.corpus {
        cfg.corpus_path = corpus;
    }
    if let Some(m) = args.max_tokens {
        cfg.max_tokens = m;
    }
    cfg.validate()?;
    let records = Experiment::prepare(&cfg)?.run()?;
    let mut written = emit_report(&records, Some(&cfg), format, &args.out)?;
    written.push(write_timings(&records, &args.out)?);
    println!(
        "{:<14} {:>6} {:>5} {:>3} {:>3} {:>3} {:>8} {:>8} {:>8}",
        "domain", "lambda", "tau", "b", "d", "n", "kl", "gamma", "speedup"
    );
    for r in &records {
        let c = &r.cell;
        println!(
            "{:<14} {:>6} {:>5} {:>3} {:>3} {:>3} {:>8.4} {:>8.4} {:>8.4}",
            c.domain.to_string(),
            c.lambda,
            c.tau,
            c.branch,
            c.depth,
            c.budget,
            r.kl_estimate,
            r.stats.gamma,
            r.predicted_speedup
        );
    }
    print_written(&written);
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    let format: ReportFormat = args.format.parse()?;
    let saved = Report::load(&args.input)?;
    let written = emit_report(&saved.records, saved.config.as_ref(), format, &args.out)?;
    print_written(&written);
    Ok(())
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
