//! Self-active-learning rounds: split, train, generate, augment.
//!
//! Each round splits every language `k/100` into train and held-out parts,
//! trains a model on the train part, regenerates the trailing `t_s` words of
//! held-out sentences by repeated single-mask prediction, and adds the
//! results back to the corpus.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::corpus::{LanguageDataset, MultiCorpus, NewSentence, SplitSpec};
use crate::diversity::{diversity_score, select_diverse_batch, DiversityConfig, Scored};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::model::{argmax_non_special, Batch, TransformerMLM};
use crate::seed::{derive_seed, rng_from};
use crate::tokenizer::{normalize_words, Tokenizer, BOS_ID, MASK_ID, MASK_TOKEN};
use crate::training::{metrics_jsonl, train_steps, LossMode, MetricRecord, TrainSpec, TrainState};

#[derive(Clone, Debug, PartialEq)]
pub struct RoundConfig {
    pub k_percent: u32,
    pub t_percent: u32,
    /// Share of each held-out set used as generation sources.
    pub generation_source_fraction: f64,
    pub rounds: usize,
    /// Optimizer updates per round; `None` uses the schedule's total.
    pub steps: Option<usize>,
    pub loss_mode: LossMode,
    pub diversity: DiversityConfig,
    pub retrain_from_scratch: bool,
    /// One round without generation.
    pub baseline: bool,
    /// Keep every MASK in the context and append the prediction after it.
    pub literal_append: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            k_percent: 80,
            t_percent: 15,
            generation_source_fraction: 1.0,
            rounds: 3,
            steps: None,
            loss_mode: LossMode::Mean,
            diversity: DiversityConfig::default(),
            retrain_from_scratch: true,
            baseline: false,
            literal_append: false,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        SplitSpec { k_percent: self.k_percent, seed: 0 }.validate()?;
        if self.t_percent == 0 || self.t_percent >= 100 {
            return Err(Error::Config(format!("t_percent must be in (0, 100), got {}", self.t_percent)));
        }
        if !(0.0..=1.0).contains(&self.generation_source_fraction) {
            return Err(Error::Config(format!(
                "generation_source_fraction must be in [0, 1], got {}",
                self.generation_source_fraction
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        self.diversity.validate()
    }

    /// Baseline mode collapses to one round with nothing generated.
    pub fn effective(&self) -> Self {
        if self.baseline {
            Self { rounds: 1, generation_source_fraction: 0.0, ..self.clone() }
        } else {
            self.clone()
        }
    }
}

/// `⌈n·t/100⌉ + 1`, capped at `n − 1`; `None` when `n < 2`.
pub fn compute_mask_count(n: usize, t_percent: u32) -> Option<usize> {
    if n < 2 {
        return None;
    }
    let raw = (n * t_percent as usize).div_ceil(100) + 1;
    Some(raw.min(n - 1))
}

/// The first `n − t_s` words.
pub fn build_prompt<S: AsRef<str>>(words: &[S], t_s: usize) -> Result<Vec<&str>> {
    let n = words.len();
    if t_s == 0 || t_s >= n {
        return Err(Error::Contract(format!("t_s = {t_s} outside [1, {}]", n.saturating_sub(1))));
    }
    Ok(words[..n - t_s].iter().map(AsRef::as_ref).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub lang: String,
    /// Position of the source in its language's dataset.
    pub source_index: usize,
    pub source: String,
    pub prompt_words: usize,
    pub t_s: usize,
    pub generated: String,
    pub predicted_ids: Vec<u32>,
    pub diversity: Option<f64>,
}

impl Scored for GenerationRecord {
    fn diversity(&self) -> Option<f64> {
        self.diversity
    }
}

/// Outcome of one generation attempt.
#[derive(Clone, Debug, PartialEq)]
pub enum Generation {
    Done(GenerationRecord),
    Skipped(String),
}

/// Anything that can fill a trailing MASK.
pub trait MaskPredictor {
    fn max_seq_len(&self) -> usize;

    /// Best non-special token for a prompt whose only MASK is the last id.
    fn predict_masked(&self, prompt_ids: &[u32]) -> Result<u32>;

    /// Best non-special token at the last position, earlier MASKs allowed.
    fn predict_last(&self, ids: &[u32]) -> Result<u32>;
}

impl MaskPredictor for TransformerMLM {
    fn max_seq_len(&self) -> usize {
        self.config().max_seq_len
    }

    fn predict_masked(&self, prompt_ids: &[u32]) -> Result<u32> {
        Ok(TransformerMLM::predict_masked(self, prompt_ids)?.0)
    }

    fn predict_last(&self, ids: &[u32]) -> Result<u32> {
        let batch = Batch::from_sequences(&[ids.to_vec()])?;
        let logits = self.logits_at(&batch, &[ids.len() - 1])?;
        Ok(argmax_non_special(logits.data()))
    }
}

/// Regenerates the last `t_s` words of `source_words`. Each slot appends a
/// MASK to the prompt, asks the model for the masked token, puts the
/// prediction in place of the MASK and takes its decoded text as the next
/// word.
pub fn generate_sentence<P: MaskPredictor + ?Sized, S: AsRef<str>>(
    model: &P,
    tokenizer: &Tokenizer,
    source_words: &[S],
    t_s: usize,
    literal_append: bool,
) -> Result<Generation> {
    let prompt = build_prompt(source_words, t_s)?;
    let mut ids = vec![BOS_ID];
    ids.extend(tokenizer.encode(&prompt.join(" ")));
    let per_slot = if literal_append { 2 } else { 1 };
    let longest = ids.len() + per_slot * t_s - usize::from(literal_append);
    let max_len = model.max_seq_len();
    if longest > max_len {
        return Ok(Generation::Skipped(format!("context of {longest} tokens exceeds max_seq_len {max_len}")));
    }
    let mut words: Vec<String> = prompt.iter().map(|w| (*w).to_owned()).collect();
    let mut predicted = Vec::with_capacity(t_s);
    for _ in 0..t_s {
        ids.push(MASK_ID);
        let tok = if literal_append {
            model.predict_last(&ids)?
        } else {
            let tok = model.predict_masked(&ids)?;
            ids.pop();
            tok
        };
        ids.push(tok);
        predicted.push(tok);
        let word = tokenizer.decode(&[tok])?;
        if word.is_empty() || word.contains(char::is_whitespace) {
            return Ok(Generation::Skipped(format!("token {tok} does not decode to a single word")));
        }
        if literal_append {
            words.push(MASK_TOKEN.to_owned());
        }
        words.push(word);
    }
    let source: Vec<&str> = source_words.iter().map(AsRef::as_ref).collect();
    let tail: Vec<&str> = words.iter().rev().step_by(per_slot).take(t_s).rev().map(String::as_str).collect();
    let mut scored = source[..source.len() - t_s].to_vec();
    scored.extend(tail);
    let diversity = diversity_score(&source, &scored, t_s).ok();
    Ok(Generation::Done(GenerationRecord {
        lang: String::new(),
        source_index: 0,
        source: source.join(" "),
        prompt_words: prompt.len(),
        t_s,
        generated: words.join(" "),
        predicted_ids: predicted,
        diversity,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedSource {
    pub lang: String,
    pub source_index: usize,
    pub reason: String,
}

/// `round(fraction·|held|)` indices drawn without replacement, in
/// ascending order.
pub fn pick_sources(held: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let m = ((fraction * held.len() as f64).round() as usize).min(held.len());
    let mut picked = held.to_vec();
    picked.shuffle(&mut rng_from(seed));
    picked.truncate(m);
    picked.sort_unstable();
    picked
}

/// Generates from each listed sentence of `data`, in order.
pub fn generate_for_sources<P: MaskPredictor + ?Sized>(
    model: &P,
    tokenizer: &Tokenizer,
    data: &LanguageDataset,
    sources: &[usize],
    t_percent: u32,
    literal_append: bool,
) -> Result<(Vec<GenerationRecord>, Vec<SkippedSource>)> {
    let lang = data.lang();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &idx in sources {
        let text = &data
            .sentences()
            .get(idx)
            .ok_or_else(|| Error::Index(format!("source {idx} out of range {} for `{lang}`", data.len())))?
            .text;
        let words = normalize_words(text);
        let skip = |reason: String| SkippedSource { lang: lang.to_owned(), source_index: idx, reason };
        let Some(t_s) = compute_mask_count(words.len(), t_percent) else {
            skipped.push(skip("fewer than two words".into()));
            continue;
        };
        match generate_sentence(model, tokenizer, &words, t_s, literal_append)? {
            Generation::Done(mut r) => {
                r.lang = lang.to_owned();
                r.source_index = idx;
                records.push(r);
            }
            Generation::Skipped(reason) => {
                log::debug!("{lang}: skipped sentence {idx}: {reason}");
                skipped.push(skip(reason));
            }
        }
    }
    Ok((records, skipped))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundLangRow {
    pub lang: String,
    pub size_before: usize,
    pub train_size: usize,
    pub heldout_size: usize,
    pub sources: usize,
    pub generated: usize,
    pub rejected: usize,
    pub skipped: usize,
    pub mean_t_s: f64,
    pub mean_diversity: f64,
    pub size_after: usize,
}

#[derive(Clone, Debug)]
pub struct RoundReport {
    pub round: usize,
    pub rows: Vec<RoundLangRow>,
    pub eval: EvalReport,
    /// Mean objective over the last tenth of the round's steps.
    pub final_loss: f64,
    pub steps: usize,
    pub truncated: usize,
    pub init_checksum: String,
    pub final_checksum: String,
    pub metrics: Vec<MetricRecord>,
    /// Every completed generation, accepted or not.
    pub records: Vec<GenerationRecord>,
    pub accepted: Vec<bool>,
    pub skipped: Vec<SkippedSource>,
}

pub struct RoundOutput {
    pub corpus: MultiCorpus,
    pub model: TransformerMLM,
    pub state: TrainState,
    pub report: RoundReport,
}

/// One full round. `previous` is reused when `retrain_from_scratch` is off.
pub fn run_round(
    corpus: &MultiCorpus,
    tokenizer: &Tokenizer,
    round: usize,
    cfg: &ExperimentConfig,
    previous: Option<TransformerMLM>,
) -> Result<RoundOutput> {
    let rc = cfg.round.effective();
    rc.validate()?;
    let all = |e| ctx(round, "*")(e);

    // (1) split
    let split_spec = SplitSpec::new(rc.k_percent, derive_seed(cfg.seed, "split", round as u64))?;
    let split = corpus.split(&split_spec).map_err(|e| {
        let lang = match &e {
            Error::Split { lang, .. } => lang.clone(),
            _ => "*".into(),
        };
        Error::InRound { round, lang, source: Box::new(e) }
    })?;

    // (2) train
    let mut model_cfg = cfg.model.clone();
    model_cfg.vocab_size = tokenizer.vocab_size();
    let mut model = match previous {
        Some(m) if !rc.retrain_from_scratch => m,
        _ => TransformerMLM::new(model_cfg, derive_seed(cfg.seed, "init", round as u64)).map_err(all)?,
    };
    let init_checksum = model.checksum();
    let steps = rc.steps.unwrap_or(cfg.optimizer.total_steps);
    let spec = TrainSpec {
        policy: &cfg.masking,
        optimizer: &cfg.optimizer,
        steps,
        loss_mode: rc.loss_mode,
        seed: derive_seed(cfg.seed, "train", round as u64),
        round,
    };
    let outcome = train_steps(&mut model, &split.train, tokenizer, &spec, None).map_err(all)?;
    let final_checksum = model.checksum();
    let totals: Vec<f64> = outcome.metrics.iter().filter(|m| m.lang == "all").map(|m| m.loss).collect();
    let tail = (totals.len() / 10).max(1).min(totals.len());
    let final_loss = if totals.is_empty() {
        f64::NAN
    } else {
        totals[totals.len() - tail..].iter().sum::<f64>() / tail as f64
    };
    log::info!("round {round}: {steps} steps, final loss {final_loss:.4}");

    let eval = evaluate(&model, tokenizer, &split.heldout, &cfg.masking, derive_seed(cfg.seed, "eval", round as u64))
        .map_err(all)?;

    // (3) generate, in sorted language order
    let gen_seed = derive_seed(cfg.seed, "gen", round as u64);
    let langs = corpus.lang_codes();
    let per_lang: Vec<(Vec<GenerationRecord>, Vec<SkippedSource>, usize)> = langs
        .par_iter()
        .map(|lang| {
            let data = corpus.get(lang).expect("split languages come from the corpus");
            let held = &split.heldout_indices[lang];
            let picked = pick_sources(held, rc.generation_source_fraction, derive_seed(gen_seed, &format!("lang:{lang}"), 0));
            let m = picked.len();
            let (records, skipped) = generate_for_sources(&model, tokenizer, data, &picked, rc.t_percent, rc.literal_append)
                .map_err(ctx(round, lang))?;
            Ok((records, skipped, m))
        })
        .collect::<Result<_>>()?;

    // (4) filter and augment
    let mut next = corpus.clone();
    let mut rows = Vec::with_capacity(langs.len());
    let mut all_records = Vec::new();
    let mut accepted_flags = Vec::new();
    let mut all_skipped = Vec::new();
    for (lang, (records, skipped, sources)) in langs.iter().zip(per_lang) {
        let accepted = select_diverse_batch(&records, &rc.diversity);
        let before = corpus.get(lang).map_or(0, |d| d.len());
        let additions = accepted
            .iter()
            .map(|r| NewSentence { text: r.generated.clone(), source_index: r.source_index, diversity: r.diversity })
            .collect();
        next.augment(lang, additions, round).map_err(ctx(round, lang))?;
        let after = next.get(lang).map_or(0, |d| d.len());
        if after != before + accepted.len() {
            return Err(ctx(round, lang)(Error::Contract(format!(
                "dataset grew from {before} to {after} after adding {}",
                accepted.len()
            ))));
        }
        let scores: Vec<f64> = records.iter().filter_map(|r| r.diversity).collect();
        rows.push(RoundLangRow {
            lang: lang.clone(),
            size_before: before,
            train_size: split.train_indices[lang].len(),
            heldout_size: split.heldout_indices[lang].len(),
            sources,
            generated: accepted.len(),
            rejected: records.len() - accepted.len(),
            skipped: skipped.len(),
            mean_t_s: mean(records.iter().map(|r| r.t_s as f64)),
            mean_diversity: mean(scores.iter().copied()),
            size_after: after,
        });
        accepted_flags.extend(records.iter().map(|r| rc.diversity.accepts(r.diversity.unwrap_or(0.0))));
        all_records.extend(records);
        all_skipped.extend(skipped);
    }

    let report = RoundReport {
        round,
        rows,
        eval,
        final_loss,
        steps,
        truncated: outcome.truncated,
        init_checksum,
        final_checksum,
        metrics: outcome.metrics,
        records: all_records,
        accepted: accepted_flags,
        skipped: all_skipped,
    };
    Ok(RoundOutput { corpus: next, model, state: outcome.state, report })
}

fn ctx(round: usize, lang: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::InRound { round, lang: lang.to_owned(), source: Box::new(e) }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

/// One line per completed generation with its filter decision, then one
/// per skipped source.
pub fn generations_tsv(records: &[GenerationRecord], accepted: &[bool], skipped: &[SkippedSource]) -> String {
    let mut out = String::from("lang\tsource_index\tt_s\tstatus\tdiversity\tsource\tgenerated\n");
    for (r, &ok) in records.iter().zip(accepted) {
        let status = if ok { "accepted" } else { "rejected" };
        let d = r.diversity.map_or("NA".into(), fmt_num);
        let _ = writeln!(out, "{}\t{}\t{}\t{status}\t{d}\t{}\t{}", r.lang, r.source_index, r.t_s, r.source, r.generated);
    }
    for s in skipped {
        let _ = writeln!(out, "{}\t{}\tNA\tskipped: {}\tNA\t\t", s.lang, s.source_index, s.reason);
    }
    out
}

impl RoundReport {
    pub const HEADER: &'static str =
        "lang\tsize_before\ttrain_size\theldout_size\tsources\tgenerated\trejected\tskipped\tmean_t_s\tmean_diversity\tsize_after";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.lang,
                r.size_before,
                r.train_size,
                r.heldout_size,
                r.sources,
                r.generated,
                r.rejected,
                r.skipped,
                fmt_num(r.mean_t_s),
                fmt_num(r.mean_diversity),
                r.size_after
            );
        }
        out
    }

    /// Completed generations and skips, one per line.
    pub fn generations_tsv(&self) -> String {
        generations_tsv(&self.records, &self.accepted, &self.skipped)
    }

    pub fn summary(&self) -> String {
        format!(
            "round={}\nsteps={}\nfinal_loss={}\ntruncated={}\ninit_checksum={}\nfinal_checksum={}\n",
            self.round,
            self.steps,
            fmt_num(self.final_loss),
            self.truncated,
            self.init_checksum,
            self.final_checksum
        )
    }

    /// Writes `report.tsv`, `metrics.jsonl`, `generations.tsv`, `eval.tsv`
    /// and `summary.kv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.tsv", self.to_tsv()),
            ("metrics.jsonl", metrics_jsonl(&self.metrics)),
            ("generations.tsv", self.generations_tsv()),
            ("eval.tsv", self.eval.to_tsv()),
            ("summary.kv", self.summary()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub struct ExperimentReport {
    pub rounds: Vec<RoundReport>,
    pub corpus: MultiCorpus,
    pub model: TransformerMLM,
}

impl ExperimentReport {
    pub const HEADER: &'static str =
        "round\tlang\tsize_before\tgenerated\tsize_after\ttrain_loss\theldout_masked_acc\theldout_pseudo_ppl\tmean_diversity";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rounds {
            let mut tot = (0, 0, 0);
            for (row, ev) in r.rows.iter().zip(&r.eval.languages) {
                tot = (tot.0 + row.size_before, tot.1 + row.generated, tot.2 + row.size_after);
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\tNA\t{}\t{}\t{}",
                    r.round,
                    row.lang,
                    row.size_before,
                    row.generated,
                    row.size_after,
                    fmt_num(ev.masked_token_accuracy),
                    fmt_num(ev.pseudo_perplexity),
                    fmt_num(row.mean_diversity)
                );
            }
            let div = mean(r.records.iter().filter_map(|g| g.diversity));
            let _ = writeln!(
                out,
                "{}\tall\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.round,
                tot.0,
                tot.1,
                tot.2,
                fmt_num(r.final_loss),
                fmt_num(r.eval.overall.masked_token_accuracy),
                fmt_num(r.eval.overall.pseudo_perplexity),
                fmt_num(div)
            );
        }
        out
    }
}

/// Runs every configured round on a growing corpus. When `out` is given,
/// writes `round_<r>/` reports and checkpoints, the corpus under `corpus/`
/// and `experiment.tsv`.
pub fn run_experiment(
    initial: &MultiCorpus,
    tokenizer: &Tokenizer,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rc = cfg.round.effective();
    let mut corpus = initial.clone();
    let mut rounds = Vec::with_capacity(rc.rounds);
    let mut model = None;
    for r in 1..=rc.rounds {
        let output = run_round(&corpus, tokenizer, r, cfg, model.take())?;
        if let Some(dir) = out {
            let rdir = dir.join(format!("round_{r}"));
            output.report.write(&rdir)?;
            let ckpt = rdir.join("checkpoint");
            output.model.save(&ckpt, tokenizer)?;
            output.state.save(&ckpt)?;
            output.corpus.save(&dir.join("corpus"))?;
        }
        corpus = output.corpus;
        model = Some(output.model);
        rounds.push(output.report);
    }
    let report = ExperimentReport { rounds, corpus, model: model.expect("at least one round") };
    if let Some(dir) = out {
        let path = dir.join("experiment.tsv");
        fs::write(&path, report.to_tsv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
