//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. An optional argument filters criteria by name.

mod common;

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{check_case, check_model_gradients, op_cases, toy_setup, FD_STEP};
use rand::seq::index::sample;
use rand::Rng as _;
use selfal::corpus::Provenance;
use selfal::diversity::{edit_distance, select_diverse_batch, wer, DiversityConfig};
use selfal::evaluation::{masked_accuracy, MaskedCounts};
use selfal::model::{param_count, Batch};
use selfal::seed::rng_from;
use selfal::tokenizer::{is_special, normalize, MASK_ID, UNK_ID};
use selfal::training::{
    apply_masking, frame, train_steps, weighted_loss, LossMode, MaskingPolicy, OptimizerConfig, TrainSpec, IGNORE_INDEX,
};
use selfal::{run_experiment, Error, ExperimentConfig, ModelConfig, Tokenizer, TransformerMLM};

type Outcome = Result<String, Box<dyn StdError>>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+).into());
        }
    };
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("overfit sanity", overfit_sanity),
        ("masking statistics", masking_statistics),
        ("round bookkeeping", round_bookkeeping),
        ("weighted loss", weighted_loss_oracle),
        ("wer oracle equivalence", wer_oracle_equivalence),
        ("parameter count", parameter_count),
        ("determinism", determinism),
        ("tokenizer", tokenizer_contract),
        ("desk-scale dynamics", desk_scale_dynamics),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()).into())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {e}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (mut checks, mut worst, mut worst_name) = (0usize, 0.0f64, String::new());
    for seed in 0..20 {
        for case in op_cases(seed) {
            let c = check_case(&case, seed, FD_STEP)?;
            ensure!(c.forward_gap < 1e-5, "seed {seed}: {} forward differs from its reference by {:e}", case.name, c.forward_gap);
            for e in c.errors {
                ensure!(e < 1e-3, "seed {seed}: {} relative error {e:e}", case.name);
                checks += 1;
                if e > worst {
                    (worst, worst_name) = (e, case.name.to_owned());
                }
            }
        }
    }
    let mut model_worst = 0.0f64;
    for seed in 0..20 {
        for tied in [true, false] {
            let c = check_model_gradients(seed, tied);
            ensure!(c.forward_gap < 1e-4, "seed {seed}: model forward differs from the reference by {:e}", c.forward_gap);
            for (name, e, _, _) in c.tensors {
                ensure!(e < 1e-3, "seed {seed}, tied {tied}: {name} relative error {e:e}");
                model_worst = model_worst.max(e);
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{checks} op gradients over 20 seeds, worst {worst:.1e} ({worst_name}); model over 20 seeds × tied/untied, worst {model_worst:.1e}"
    ))
}

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let (corpus, tok) = toy_setup(1, 32, 11, 500);
    let cfg = ModelConfig { vocab_size: tok.vocab_size(), dropout_prob: 0.0, ..ModelConfig::default() };
    ensure!(cfg.hidden_size == 64 && cfg.num_layers == 2, "desk defaults changed: {cfg:?}");
    let mut model = TransformerMLM::new(cfg.clone(), 1)?;
    let policy = MaskingPolicy::default();
    let steps = 2000;
    let opt = OptimizerConfig { learning_rate: 1e-3, warmup_steps: 100, total_steps: steps, batch_size: 32, ..Default::default() };
    let spec = TrainSpec { policy: &policy, optimizer: &opt, steps, loss_mode: LossMode::Mean, seed: 3, round: 1 };
    let out = train_steps(&mut model, &corpus, &tok, &spec, None)?;
    let losses: Vec<f64> = out.metrics.iter().map(|m| m.loss).collect();
    ensure!(losses.len() == steps, "{} metric records for {steps} steps", losses.len());
    let window = 100;
    let means: Vec<f64> = losses.chunks(window).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let final_loss = *means.last().unwrap();
    let first_below = means.iter().position(|&m| m < 0.1).map(|i| (i + 1) * window);

    let frames: Vec<Vec<u32>> = corpus.texts().map(|t| frame(&tok, t, cfg.max_seq_len).0).collect();
    let mut counts = MaskedCounts::default();
    for seed in 0..20 {
        let c = masked_accuracy(&model, &frames, &policy, 1000 + seed)?;
        counts.correct += c.correct;
        counts.total += c.total;
    }
    let acc = counts.accuracy();
    let trend: Vec<String> = means.iter().step_by(4).map(|m| format!("{m:.3}")).collect();
    ensure!(final_loss < 0.1, "mean loss over the last {window} steps {final_loss:.4}; trend {}", trend.join(" "));
    ensure!(means[0] > final_loss, "loss did not fall: {} -> {final_loss}", means[0]);
    ensure!(acc > 0.95, "masked accuracy {acc:.4} over {} positions", counts.total);
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(format!(
        "{} sentences, vocab {}: loss {final_loss:.4} over the last {window} steps (first below 0.1 by step {}), \
         masked accuracy {acc:.4} over {} positions; 100-step means {}",
        frames.len(),
        tok.vocab_size(),
        first_below.unwrap_or(0),
        counts.total,
        trend.join(" ")
    ))
}

fn masking_statistics() -> Outcome {
    let (corpus, tok) = toy_setup(3, 400, 17, 1000);
    let frames: Vec<Vec<u32>> = corpus.texts().map(|t| frame(&tok, t, 64).0).collect();
    let policy = MaskingPolicy::default();
    let mut rng = rng_from(77);
    let (mut eligible, mut masked, mut to_mask, mut random, mut kept) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for chunk in frames.chunks(32) {
        let batch = Batch::from_sequences(chunk)?;
        let m = apply_masking(&batch, &policy, tok.vocab_size(), &mut rng)?;
        for i in 0..batch.ids.len() {
            if batch.pad_mask[i] || is_special(batch.ids[i]) {
                ensure!(m.labels[i] == IGNORE_INDEX, "special or padded position {i} was selected");
                continue;
            }
            eligible += 1;
            if m.labels[i] == IGNORE_INDEX {
                ensure!(m.batch.ids[i] == batch.ids[i], "unselected position {i} was changed");
                continue;
            }
            masked += 1;
            match m.batch.ids[i] {
                MASK_ID => to_mask += 1,
                id if id == batch.ids[i] => kept += 1,
                id => {
                    ensure!(!is_special(id), "random replacement drew special token {id}");
                    random += 1;
                }
            }
        }
    }
    ensure!(eligible >= 10_000, "only {eligible} eligible positions");
    let frac = masked as f64 / eligible as f64;
    ensure!((0.13..=0.17).contains(&frac), "masked fraction {frac:.4}");
    let shares = [to_mask, random, kept].map(|c| c as f64 / masked as f64);
    for (share, target) in shares.iter().zip([0.8, 0.1, 0.1]) {
        ensure!((share - target).abs() <= 0.03, "corruption shares {shares:?}");
    }
    Ok(format!(
        "{eligible} eligible, masked {frac:.4}; mask/random/keep {:.4}/{:.4}/{:.4}",
        shares[0], shares[1], shares[2]
    ))
}

fn small_experiment(tok: &Tokenizer, steps: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model = ModelConfig {
        max_seq_len: 48,
        hidden_size: 16,
        num_heads: 2,
        num_layers: 1,
        ffn_inner_size: 32,
        vocab_size: tok.vocab_size(),
        ..cfg.model
    };
    cfg.optimizer = OptimizerConfig { learning_rate: 3e-3, warmup_steps: 2, total_steps: steps, batch_size: 8, ..cfg.optimizer };
    cfg.round.steps = Some(steps);
    cfg.round.rounds = 3;
    cfg.seed = seed;
    cfg
}

/// ⌈n·t/100⌉ + 1, clamped to leave one prompt word.
fn expected_t_s(n: usize, t_percent: u32) -> Option<usize> {
    (n >= 2).then(|| ((n * t_percent as usize).div_ceil(100) + 1).min(n - 1))
}

fn round_bookkeeping() -> Outcome {
    let (corpus, tok) = toy_setup(3, 40, 13, 300);
    let cfg = small_experiment(&tok, 20, 5);
    let report = run_experiment(&corpus, &tok, &cfg, None)?;
    ensure!(report.rounds.len() == 3, "{} rounds", report.rounds.len());
    let initial: BTreeMap<String, usize> = corpus.languages().map(|d| (d.lang().to_owned(), d.len())).collect();
    let mut sizes = initial.clone();
    let mut added: BTreeMap<String, usize> = BTreeMap::new();
    let mut previous_final: Option<&str> = None;
    let mut records = 0;
    for r in &report.rounds {
        for row in &r.rows {
            ensure!(row.size_before == sizes[&row.lang], "round {} {}: size_before {}", r.round, row.lang, row.size_before);
            ensure!(row.size_after == row.size_before + row.generated, "round {} {}: growth", r.round, row.lang);
            sizes.insert(row.lang.clone(), row.size_after);
            *added.entry(row.lang.clone()).or_default() += row.generated;
        }
        for rec in &r.records {
            let source: Vec<&str> = rec.source.split(' ').collect();
            let generated: Vec<&str> = rec.generated.split(' ').collect();
            let n = source.len();
            ensure!(Some(rec.t_s) == expected_t_s(n, cfg.round.t_percent), "t_s {} for {n} words", rec.t_s);
            ensure!(generated.len() == n, "length {} vs {n}: {:?}", generated.len(), rec.generated);
            ensure!(generated[..n - rec.t_s] == source[..n - rec.t_s], "prefix changed: {:?} -> {:?}", rec.source, rec.generated);
            records += 1;
        }
        ensure!(r.init_checksum != r.final_checksum, "round {} did not change the weights", r.round);
        if let Some(prev) = previous_final {
            ensure!(r.init_checksum != prev, "round {} starts from the previous weights", r.round);
            ensure!(r.final_checksum != prev, "round {} final weights equal round {}'s", r.round, r.round - 1);
        }
        previous_final = Some(&r.final_checksum);
    }
    ensure!(records > 0, "no generations");
    for d in report.corpus.languages() {
        let expected = initial[d.lang()] + added.get(d.lang()).copied().unwrap_or(0);
        ensure!(d.len() == expected, "{}: {} sentences, telescoping sum gives {expected}", d.lang(), d.len());
        let generated = d.sentences().iter().filter(|s| matches!(s.provenance, Provenance::Generated { .. })).count();
        ensure!(generated == d.len() - initial[d.lang()], "{}: {generated} generated sentences stored", d.lang());
    }
    let growth: Vec<String> = sizes.iter().map(|(l, n)| format!("{l} {}→{n}", initial[l])).collect();
    Ok(format!("{records} records, t_s, prefix and length hold for all; sizes {}; checksums distinct", growth.join(", ")))
}

fn weighted_loss_oracle() -> Outcome {
    ensure!(weighted_loss(&[("a", 1.0, 3), ("b", 2.0, 1)], 2, 4)? == 0.625, "first example");
    ensure!(weighted_loss(&[("a", 3.0, 5), ("b", 6.0, 5), ("c", 9.0, 5)], 3, 15)? == 2.0, "second example");
    ensure!(weighted_loss(&[("a", 4.25, 17)], 1, 17)? == 4.25, "single-language identity");
    let mut rng = rng_from(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let entries: Vec<(f64, usize)> = (0..n).map(|_| (rng.random_range(0.0..20.0), rng.random_range(1..10_000))).collect();
        let names: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        let input: Vec<(&str, f64, usize)> = entries.iter().zip(&names).map(|(&(l, s), name)| (name.as_str(), l, s)).collect();
        let total: usize = entries.iter().map(|e| e.1).sum();
        let oracle = entries.iter().map(|&(l, s)| s as f64 / total as f64 * l).sum::<f64>() / n as f64;
        let got = weighted_loss(&input, n, total)?;
        let rel = (got - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
        ensure!(rel <= 1e-6, "{got} vs oracle {oracle}");
        worst = worst.max(rel);
    }
    Ok(format!("examples exact; 1000 random inputs, worst relative gap {worst:.1e}"))
}

fn naive_edit_distance(a: &[&str], b: &[&str]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = naive_edit_distance(ra, rb) + usize::from(x != y);
            sub.min(naive_edit_distance(ra, b) + 1).min(naive_edit_distance(a, rb) + 1)
        }
    }
}

fn wer_oracle_equivalence() -> Outcome {
    let alphabet = ["a", "b", "c"];
    let mut seqs: Vec<Vec<&str>> = vec![vec![]];
    let mut frontier = seqs.clone();
    for _ in 0..5 {
        frontier = frontier.iter().flat_map(|s| alphabet.iter().map(move |w| [s.as_slice(), &[*w]].concat())).collect();
        seqs.extend(frontier.iter().cloned());
    }
    ensure!(seqs.len() == 364, "{} sequences", seqs.len());
    let mut pairs = 0usize;
    for a in &seqs {
        for b in &seqs {
            let d = naive_edit_distance(a, b);
            ensure!(edit_distance(a, b) == d, "{a:?} vs {b:?}: {} != {d}", edit_distance(a, b));
            if !a.is_empty() {
                ensure!(wer(a, b)? == d as f64 / a.len() as f64, "wer {a:?} vs {b:?}");
            }
            pairs += 1;
        }
    }
    let mut rng = rng_from(6);
    for _ in 0..1000 {
        let scores: Vec<f64> = (0..rng.random_range(0..50)).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut thresholds: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.5)).collect();
        thresholds.sort_by(f64::total_cmp);
        let kept: Vec<Vec<f64>> =
            thresholds.iter().map(|&threshold| select_diverse_batch(&scores, &DiversityConfig { threshold, enabled: true })).collect();
        for w in kept.windows(2) {
            ensure!(w[1].len() <= w[0].len() && w[1].iter().all(|s| w[0].contains(s)), "selection not monotone: {thresholds:?}");
        }
    }
    Ok(format!("{pairs} pairs match exhaustive recursion; selection monotone on 1000 random batches"))
}

fn parameter_count() -> Outcome {
    let n = param_count(&ModelConfig::large());
    let rel = (n as f64 - 264e6) / 264e6;
    ensure!(rel.abs() <= 0.05, "{n} parameters, {:+.2}% from 264M", rel * 100.0);
    Ok(format!("{n} parameters ({:+.2}% from 264M)", rel * 100.0))
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir()?;
    let run = |name: &str| -> selfal::Result<BTreeMap<PathBuf, Vec<u8>>> {
        let (corpus, tok) = toy_setup(3, 30, 8, 250);
        let dir = tmp.path().join(name);
        tok.save(&dir.join("tokenizer"), false)?;
        run_experiment(&corpus, &tok, &small_experiment(&tok, 12, 42), Some(&dir))?;
        Ok(tree(&dir))
    };
    let (a, b) = (run("a")?, run("b")?);
    ensure!(a.keys().eq(b.keys()), "different file sets");
    for (path, bytes) in &a {
        ensure!(bytes == &b[path], "{} differs", path.display());
    }
    for r in 1..=3 {
        for f in ["metrics.jsonl", "report.tsv", "generations.tsv", "eval.tsv"] {
            ensure!(a.contains_key(&PathBuf::from(format!("round_{r}/{f}"))), "round_{r}/{f} missing");
        }
    }
    let generated = a.keys().filter(|p| p.to_string_lossy().contains("generated_round_")).count();
    ensure!(generated > 0, "no generated corpus files");
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files ({bytes} bytes, {generated} generated-corpus files) identical across runs", a.len()))
}

fn tokenizer_contract() -> Outcome {
    let corpus = selfal::toy::toy_corpus(3, 400, 9)?;
    let texts: Vec<&str> = corpus.texts().collect();
    let tok = Tokenizer::train(corpus.original_texts(), 1000)?;
    let mut rng = rng_from(1);
    for i in sample(&mut rng, texts.len(), 1000) {
        let ids = tok.encode(texts[i]);
        ensure!(!ids.contains(&UNK_ID), "UNK in {:?}", texts[i]);
        let back = tok.decode(&ids)?;
        ensure!(back == normalize(texts[i]), "{:?} decoded as {back:?}", texts[i]);
    }
    let tmp = tempfile::tempdir()?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    tok.save(&a, false)?;
    Tokenizer::train(corpus.original_texts(), 1000)?.save(&b, false)?;
    ensure!(tree(&a) == tree(&b), "retraining produced different files");
    let other = Tokenizer::train(corpus.original_texts(), 300)?;
    let refused = other.save(&a, false);
    ensure!(matches!(refused, Err(Error::Exists(_))), "overwrite not refused: {refused:?}");
    ensure!(tree(&a) == tree(&b), "refused save modified the files");
    ensure!(Tokenizer::load(&a)? == tok, "reloaded tokenizer differs");
    Ok(format!("1000 of {} sentences round-trip at vocab {}; retraining identical; overwrite refused", texts.len(), tok.vocab_size()))
}

fn desk_scale_dynamics() -> Outcome {
    let start = Instant::now();
    let (corpus, tok) = toy_setup(5, 100, 21, 1000);
    let mut cfg = ExperimentConfig::default();
    cfg.model.vocab_size = tok.vocab_size();
    cfg.optimizer.learning_rate = 1e-3;
    cfg.round.rounds = 3;
    cfg.seed = 7;
    let tmp = tempfile::tempdir()?;
    let report = run_experiment(&corpus, &tok, &cfg, Some(tmp.path()))?;
    let langs: Vec<&str> = corpus.languages().map(|d| d.lang()).collect();
    ensure!(report.rounds.len() == 3, "{} rounds", report.rounds.len());
    for r in &report.rounds {
        ensure!(r.rows.len() == langs.len() && r.eval.languages.len() == langs.len(), "round {}: missing languages", r.round);
        for (row, ev) in r.rows.iter().zip(&r.eval.languages) {
            ensure!(ev.masked_token_accuracy.is_finite(), "round {} {}: accuracy not finite", r.round, row.lang);
            ensure!(row.mean_diversity.is_finite(), "round {} {}: no diversity scores", r.round, row.lang);
        }
    }
    let tsv = report.to_tsv();
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(3600), "took {elapsed:?}");
    let summary: Vec<String> = tsv
        .lines()
        .filter(|l| l.split('\t').nth(1) == Some("all"))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            format!("round {}: size {}→{}, held-out acc {}, diversity {}", f[0], f[2], f[4], f[6], f[8])
        })
        .collect();
    println!("{tsv}");
    Ok(format!("{} sentences, {} languages; {}", corpus.texts().count(), langs.len(), summary.join("; ")))
}
