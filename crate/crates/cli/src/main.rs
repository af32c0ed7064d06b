//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime
//! failure, 3 non-finite loss.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selfal::active::{generate_for_sources, generations_tsv, pick_sources};
use selfal::corpus::{render_stats, stats, MultiCorpus, NewSentence, MANIFEST_FILE};
use selfal::diversity::select_diverse_batch;
use selfal::evaluation::evaluate;
use selfal::seed::derive_seed;
use selfal::toy::toy_corpus;
use selfal::{load_corpus, run_experiment, DiversityConfig, Error, ExperimentConfig, MaskingPolicy, Result, SplitSpec};
use selfal::{Tokenizer, TransformerMLM};

#[derive(Parser)]
#[command(name = "selfal", version, about = "Self-active learning for masked language model pretraining")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multilingual corpus.
    ToyCorpus(ToyCorpusArgs),
    /// Train the shared BPE vocabulary on every original sentence.
    TokenizerTrain(TokenizerTrainArgs),
    /// Run the split, train, generate and augment rounds.
    Experiment(ExperimentArgs),
    /// Generate from one language's held-out sentences with a trained checkpoint.
    Generate(GenerateArgs),
    /// Held-out masked accuracy and pseudo-perplexity of a checkpoint.
    Eval(EvalArgs),
    /// Per-language corpus statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct ToyCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    languages: usize,
    #[arg(long, default_value_t = 100)]
    sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TokenizerTrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab_size: usize,
    #[arg(long)]
    out: PathBuf,
    /// Replace an existing vocabulary.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    /// One round of plain training, nothing generated.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override any config key, e.g. `--set round.steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Reuse an output directory that already holds results.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lang: String,
    #[arg(long, default_value_t = 15)]
    t_percent: u32,
    /// Keep only generations scoring at least this much.
    #[arg(long)]
    diversity_threshold: Option<f64>,
    /// Train share of the split that defines the held-out sources.
    #[arg(long, default_value_t = 80)]
    k: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Round number used for seeding and output file names.
    #[arg(long, default_value_t = 1)]
    round: usize,
    /// Share of held-out sentences used as sources.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long)]
    literal_append: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_validation() {
        1
    } else {
        2
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::ToyCorpus(a) => toy(a),
        Command::TokenizerTrain(a) => tokenizer_train(a),
        Command::Experiment(a) => experiment(a),
        Command::Generate(a) => generate(a),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => {
            print!("{}", render_stats(&stats(&load_corpus(&a.corpus)?)));
            Ok(())
        }
    }
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Exists(path.to_owned()));
    }
    Ok(())
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_owned(), source: e })?;
    }
    fs::write(path, body).map_err(|e| Error::Io { path: path.to_owned(), source: e })
}

fn toy(a: ToyCorpusArgs) -> Result<()> {
    refuse_existing(&a.out.join(MANIFEST_FILE), a.force)?;
    let corpus = toy_corpus(a.languages, a.sentences, a.seed).map_err(|e| Error::Config(e.to_string()))?;
    corpus.save(&a.out)?;
    print!("{}", render_stats(&stats(&corpus)));
    Ok(())
}

fn tokenizer_train(a: TokenizerTrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let tok = Tokenizer::train(corpus.original_texts(), a.vocab_size)?;
    tok.save(&a.out, a.force)?;
    println!("vocab_size\t{}\nmerges\t{}", tok.vocab_size(), tok.merges().len());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| Error::Io { path: a.config.clone(), source: e })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {o}`: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(r) = a.rounds {
        cfg.round.rounds = r;
    }
    if a.baseline {
        cfg.round.baseline = true;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.corpus.is_some() {
        cfg.corpus = a.corpus;
    }
    if a.output.is_some() {
        cfg.output = a.output;
    }
    cfg.validate()?;
    let corpus_dir = cfg.corpus.clone().ok_or_else(|| Error::Config("no corpus: set experiment.corpus or pass --corpus".into()))?;
    let out = cfg.output.clone().ok_or_else(|| Error::Config("no output: set experiment.output or pass --output".into()))?;
    refuse_existing(&out.join("experiment.tsv"), a.force)?;

    let corpus = load_corpus(&corpus_dir)?;
    let tokenizer = match &cfg.tokenizer {
        Some(dir) => Tokenizer::load(dir)?,
        None => {
            let tok = Tokenizer::train(corpus.original_texts(), cfg.model.vocab_size)?;
            tok.save(&out.join("tokenizer"), a.force)?;
            tok
        }
    };
    write(&out.join("config.txt"), &cfg.to_text())?;
    let report = run_experiment(&corpus, &tokenizer, &cfg, Some(&out))?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    if a.round == 0 {
        return Err(Error::Config("--round starts at 1".into()));
    }
    if a.t_percent == 0 || a.t_percent >= 100 {
        return Err(Error::Config(format!("--t-percent must be in (0, 100), got {}", a.t_percent)));
    }
    if !(0.0..=1.0).contains(&a.fraction) {
        return Err(Error::Config(format!("--fraction must be in [0, 1], got {}", a.fraction)));
    }
    let diversity = DiversityConfig { threshold: a.diversity_threshold.unwrap_or(0.0), enabled: a.diversity_threshold.is_some() };
    diversity.validate()?;
    let split_spec = SplitSpec::new(a.k, derive_seed(a.seed, "split", a.round as u64))?;
    let corpus = load_corpus(&a.corpus)?;
    let data = corpus.get(&a.lang).ok_or_else(|| Error::Config(format!("language `{}` not in the corpus", a.lang)))?;
    refuse_existing(&a.out.join(&a.lang).join(format!("generated_round_{}.txt", a.round)), a.force)?;
    let (model, tokenizer) = TransformerMLM::load(&a.checkpoint)?;

    let mut single = MultiCorpus::new();
    single.insert(data.clone());
    let split = single.split(&split_spec)?;
    let gen_seed = derive_seed(derive_seed(a.seed, "gen", a.round as u64), &format!("lang:{}", a.lang), 0);
    let sources = pick_sources(&split.heldout_indices[&a.lang], a.fraction, gen_seed);
    let (records, skipped) = generate_for_sources(&model, &tokenizer, data, &sources, a.t_percent, a.literal_append)?;
    let accepted = select_diverse_batch(&records, &diversity);
    let flags: Vec<bool> = records.iter().map(|r| diversity.accepts(r.diversity.unwrap_or(0.0))).collect();

    let mut out = MultiCorpus::new();
    out.insert(data.clone());
    out.set_meta(&a.lang, corpus.meta(&a.lang))?;
    let additions = accepted
        .iter()
        .map(|r| NewSentence { text: r.generated.clone(), source_index: r.source_index, diversity: r.diversity })
        .collect();
    out.augment(&a.lang, additions, a.round)?;
    out.save(&a.out)?;
    write(
        &a.out.join(&a.lang).join(format!("generations_round_{}.tsv", a.round)),
        &generations_tsv(&records, &flags, &skipped),
    )?;
    println!(
        "lang\tsources\tgenerated\trejected\tskipped\n{}\t{}\t{}\t{}\t{}",
        a.lang,
        sources.len(),
        accepted.len(),
        records.len() - accepted.len(),
        skipped.len()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (model, tokenizer) = TransformerMLM::load(&a.checkpoint)?;
    let corpus = load_corpus(&a.corpus)?;
    let report = evaluate(&model, &tokenizer, &corpus, &MaskingPolicy::default(), a.seed)?;
    print!("{}", report.to_tsv());
    Ok(())
}
