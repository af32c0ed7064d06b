//! Masked-language-model training: corruption policy, losses, schedule,
//! AdamW and the accumulation-aware training loop.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::corpus::MultiCorpus;
use crate::error::{Error, Result};
use crate::model::{random_regular_token, Batch, TransformerMLM};
use crate::nn::Graph;
use crate::seed::{derive_seed, rng_from, Rng};
use crate::tokenizer::{is_special, Tokenizer, BOS_ID, MASK_ID};

/// Label value for positions that carry no loss.
pub const IGNORE_INDEX: i64 = -100;
pub const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct MaskingPolicy {
    pub mask_prob: f64,
    pub replace_with_mask: f64,
    pub replace_with_random: f64,
    pub keep_original: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self { mask_prob: 0.15, replace_with_mask: 0.8, replace_with_random: 0.1, keep_original: 0.1 }
    }
}

impl MaskingPolicy {
    /// Checks fractions sum to one and `mask_prob` lies in `[0, 1]`. The
    /// endpoints are accepted for identity and saturation runs.
    pub fn validate(&self) -> Result<()> {
        let fr = [self.replace_with_mask, self.replace_with_random, self.keep_original];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("corruption fractions {fr:?} must be in [0, 1] and sum to 1")));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::Config(format!("mask_prob {} must be in [0, 1]", self.mask_prob)));
        }
        Ok(())
    }
}

/// A corrupted batch and its labels (`IGNORE_INDEX` where unselected).
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedBatch {
    pub batch: Batch,
    pub labels: Vec<i64>,
}

impl MaskedBatch {
    pub fn masked_rows(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l != IGNORE_INDEX).map(|(i, _)| i).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_INDEX).count()
    }
}

/// Selects each non-special, non-padding position with probability
/// `mask_prob` and rewrites it to MASK, a random regular token, or leaves it,
/// according to the policy's fractions.
pub fn apply_masking(batch: &Batch, policy: &MaskingPolicy, vocab_size: usize, rng: &mut Rng) -> Result<MaskedBatch> {
    if batch.ids.contains(&MASK_ID) {
        return Err(Error::Contract("input to masking already contains MASK".into()));
    }
    let mut corrupted = batch.clone();
    let mut labels = vec![IGNORE_INDEX; batch.ids.len()];
    for i in 0..batch.ids.len() {
        let id = batch.ids[i];
        if batch.pad_mask[i] || is_special(id) {
            continue;
        }
        if rng.random::<f64>() >= policy.mask_prob {
            continue;
        }
        labels[i] = i64::from(id);
        let r: f64 = rng.random();
        if r < policy.replace_with_mask {
            corrupted.ids[i] = MASK_ID;
        } else if r < policy.replace_with_mask + policy.replace_with_random {
            corrupted.ids[i] = random_regular_token(rng, vocab_size);
        }
    }
    Ok(MaskedBatch { batch: corrupted, labels })
}

/// How per-language losses combine into the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Token mean over mixed-language batches.
    #[default]
    Mean,
    /// `(1/N) Σ_l (|D_l|/|D|) L_l`.
    Weighted,
    /// `Σ_l (|D_l|/|D|) L_l`, the weighted form without the `1/N` factor.
    Convex,
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "weighted" => Ok(Self::Weighted),
            "convex" => Ok(Self::Convex),
            _ => Err(Error::Config(format!("unknown loss mode `{s}` (mean, weighted, convex)"))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Weighted => "weighted",
            Self::Convex => "convex",
        })
    }
}

/// `(1/N) · Σ_l (|D_l|/|D|) · L_l` over `(lang, L_l, |D_l|)` entries.
pub fn weighted_loss(per_lang: &[(&str, f64, usize)], num_languages: usize, total_size: usize) -> Result<f64> {
    if num_languages == 0 {
        return Err(Error::Input("weighted loss over zero languages".into()));
    }
    if per_lang.iter().any(|&(_, _, n)| n == 0) {
        return Err(Error::Input("language sizes must be positive".into()));
    }
    let sum: usize = per_lang.iter().map(|&(_, _, n)| n).sum();
    if sum != total_size {
        return Err(Error::Contract(format!("language sizes sum to {sum}, total is {total_size}")));
    }
    let d = total_size as f64;
    let acc: f64 = per_lang.iter().map(|&(_, l, n)| (n as f64 / d) * l).sum();
    Ok(acc / num_languages as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            warmup_steps: 100,
            total_steps: 1000,
            batch_size: 16,
            grad_accum_steps: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    /// Full-scale schedule: batch 32, accumulation 8, 40k warmup, 500k steps.
    pub fn large() -> Self {
        Self { warmup_steps: 40_000, total_steps: 500_000, batch_size: 32, grad_accum_steps: 8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 {
            return Err(Error::Config("batch_size and grad_accum_steps must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("learning rate must be ≥ 0 and betas in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("epsilon must be > 0 and weight_decay ≥ 0".into()));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to the peak rate, then linear decay to 0 at
/// `total_steps`.
pub fn lr_at(step: usize, cfg: &OptimizerConfig) -> f64 {
    let peak = cfg.learning_rate;
    if step >= cfg.total_steps {
        return 0.0;
    }
    if step < cfg.warmup_steps {
        return peak * (step as f64 / cfg.warmup_steps as f64);
    }
    let span = (cfg.total_steps - cfg.warmup_steps) as f64;
    peak * ((cfg.total_steps - step) as f64 / span)
}

/// Optimizer moments and bookkeeping carried across steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
    /// Exponential moving average (0.9) of each language's step loss.
    pub running_loss: BTreeMap<String, f64>,
    pub seed: u64,
}

impl TrainState {
    pub fn new(model: &TransformerMLM, seed: u64) -> Self {
        let zeros: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { step: 0, first_moment: zeros.clone(), second_moment: zeros, running_loss: BTreeMap::new(), seed }
    }

    /// `optimizer.bin`: step and seed as u64, every first moment, every
    /// second moment, then the running losses as a u64 count followed by
    /// (u32 name length, UTF-8 name, f64 value) entries. All little-endian.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.step as u64).to_le_bytes());
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        for m in self.first_moment.iter().chain(&self.second_moment) {
            for v in m {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes.extend_from_slice(&(self.running_loss.len() as u64).to_le_bytes());
        for (name, v) in &self.running_loss {
            bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
            bytes.extend_from_slice(name.as_bytes());
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(OPTIMIZER_FILE);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, model: &TransformerMLM) -> Result<Self> {
        let path = dir.join(OPTIMIZER_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut rest = bytes.as_slice();
        let mut take = |len: usize| -> Result<&[u8]> {
            if rest.len() < len {
                return Err(Error::format(&path, "truncated file"));
            }
            let (head, tail) = rest.split_at(len);
            rest = tail;
            Ok(head)
        };
        let u64_of = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let step = u64_of(take(8)?) as usize;
        let seed = u64_of(take(8)?);
        let mut moments = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut per_param = Vec::with_capacity(model.params().len());
            for p in model.params() {
                let raw = take(4 * p.numel())?;
                per_param.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
            }
            moments.push(per_param);
        }
        let count = u64_of(take(8)?);
        let mut running_loss = BTreeMap::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let name = String::from_utf8(take(len)?.to_vec())
                .map_err(|_| Error::format(&path, "running-loss name is not UTF-8"))?;
            running_loss.insert(name, f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        if !rest.is_empty() {
            return Err(Error::format(&path, format!("{} trailing bytes", rest.len())));
        }
        let second_moment = moments.pop().expect("two moments");
        let first_moment = moments.pop().expect("two moments");
        Ok(Self { step, first_moment, second_moment, running_loss, seed })
    }
}

/// AdamW with decoupled weight decay on matrices only.
fn adam_update(model: &mut TransformerMLM, state: &mut TrainState, grads: &[Vec<f32>], lr: f64, cfg: &OptimizerConfig) {
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        let decay = if p.shape().len() >= 2 { cfg.weight_decay } else { 0.0 };
        let (m, v) = (&mut state.first_moment[i], &mut state.second_moment[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = f64::from(grads[i][j]);
            let mj = cfg.beta1 * f64::from(m[j]) + (1.0 - cfg.beta1) * g;
            let vj = cfg.beta2 * f64::from(v[j]) + (1.0 - cfg.beta2) * g * g;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let upd = (mj / bc1) / ((vj / bc2).sqrt() + cfg.epsilon) + decay * f64::from(*w);
            *w = (f64::from(*w) - lr * upd) as f32;
        }
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub round: usize,
    pub step: usize,
    pub lang: String,
    pub loss: f64,
    pub lr: f64,
    pub masked_acc: f64,
}

pub fn metrics_jsonl(records: &[MetricRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("metric records serialize") + "\n")
        .collect()
}

/// Everything a training run needs besides the model and data.
#[derive(Clone, Debug)]
pub struct TrainSpec<'a> {
    pub policy: &'a MaskingPolicy,
    pub optimizer: &'a OptimizerConfig,
    pub steps: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Written into metric records.
    pub round: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricRecord>,
    /// Sentences cut to fit `max_seq_len`.
    pub truncated: usize,
}

/// `[BOS] + tokens`, cut to `max_len`.
pub fn frame(tokenizer: &Tokenizer, text: &str, max_len: usize) -> (Vec<u32>, bool) {
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS_ID);
    ids.extend(tokenizer.encode(text));
    let cut = ids.len() > max_len;
    ids.truncate(max_len);
    (ids, cut)
}

struct Sampler {
    frames: Vec<Vec<u32>>,
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl Sampler {
    fn new(frames: Vec<Vec<u32>>, seed: u64) -> Self {
        let mut s = Self { order: (0..frames.len()).collect(), frames, cursor: 0, rng: rng_from(seed) };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next(&mut self) -> Vec<u32> {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.frames[self.order[self.cursor - 1]].clone()
    }
}

struct MicroBatch {
    lang: usize,
    masked: MaskedBatch,
}

/// Runs `spec.steps` optimizer updates on `model`, starting from `state`
/// (fresh when `None`). Each update accumulates `grad_accum_steps`
/// micro-batches of `batch_size` sentences. In the weighted modes every
/// micro-batch holds a single language, drawn proportionally to its size.
pub fn train_steps(
    model: &mut TransformerMLM,
    corpus: &MultiCorpus,
    tokenizer: &Tokenizer,
    spec: &TrainSpec<'_>,
    state: Option<TrainState>,
) -> Result<TrainOutcome> {
    spec.policy.validate()?;
    spec.optimizer.validate()?;
    if tokenizer.vocab_size() != model.config().vocab_size {
        return Err(Error::Contract(format!(
            "tokenizer has {} tokens, model expects {}",
            tokenizer.vocab_size(),
            model.config().vocab_size
        )));
    }
    let mut state = state.unwrap_or_else(|| TrainState::new(model, spec.seed));
    if spec.steps == 0 {
        return Ok(TrainOutcome { state, metrics: Vec::new(), truncated: 0 });
    }
    if corpus.is_empty() || corpus.languages().any(|d| d.is_empty()) {
        return Err(Error::Input("training corpus has an empty language".into()));
    }

    let max_len = model.config().max_seq_len;
    let vocab_size = model.config().vocab_size;
    let langs = corpus.lang_codes();
    let mut truncated = 0;
    let mut per_lang_frames: Vec<Vec<Vec<u32>>> = Vec::with_capacity(langs.len());
    for d in corpus.languages() {
        let frames = d
            .sentences()
            .iter()
            .map(|s| {
                let (ids, cut) = frame(tokenizer, &s.text, max_len);
                truncated += usize::from(cut);
                ids
            })
            .collect();
        per_lang_frames.push(frames);
    }
    if truncated > 0 {
        log::info!("truncated {truncated} sentences to {max_len} tokens");
    }
    let sizes: Vec<usize> = per_lang_frames.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();

    let single_language_batches = spec.loss_mode != LossMode::Mean;
    let mut samplers: Vec<Sampler> = if single_language_batches {
        per_lang_frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| Sampler::new(f, derive_seed(spec.seed, "order", i as u64)))
            .collect()
    } else {
        vec![Sampler::new(per_lang_frames.concat(), derive_seed(spec.seed, "order", 0))]
    };
    let mut lang_rng = rng_from(derive_seed(spec.seed, "language", 0));
    let mut mask_rng = rng_from(derive_seed(spec.seed, "mask", 0));
    let mut drop_rng = rng_from(derive_seed(spec.seed, "dropout", 0));
    let weights: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
    let n_langs = langs.len() as f64;

    let opt = spec.optimizer;
    let mut metrics = Vec::new();
    for _ in 0..spec.steps {
        // Sample and corrupt every micro-batch of the update up front so the
        // loss denominators are known before any backward pass.
        let mut micro = Vec::with_capacity(opt.grad_accum_steps);
        for _ in 0..opt.grad_accum_steps {
            let (lang, frames): (usize, Vec<Vec<u32>>) = if single_language_batches {
                let l = pick_weighted(&weights, &mut lang_rng);
                (l, (0..opt.batch_size).map(|_| samplers[l].next()).collect())
            } else {
                let s = &mut samplers[0];
                let frames: Vec<Vec<u32>> = (0..opt.batch_size).map(|_| s.next()).collect();
                (usize::MAX, frames)
            };
            let batch = Batch::from_sequences(&frames)?;
            let masked = apply_masking(&batch, spec.policy, vocab_size, &mut mask_rng)?;
            micro.push(MicroBatch { lang, masked });
        }
        let step_total: usize = micro.iter().map(|m| m.masked.masked_count()).sum();
        let mut lang_total = vec![0usize; langs.len()];
        for m in &micro {
            if m.lang != usize::MAX {
                lang_total[m.lang] += m.masked.masked_count();
            }
        }

        let mix: Vec<&str> =
            micro.iter().map(|m| if m.lang == usize::MAX { "mixed" } else { langs[m.lang].as_str() }).collect();
        let at_step = state.step + 1;
        let diagnose = |e: Error| match e {
            Error::NonFinite(msg) => {
                Error::NonFinite(format!("{msg} at step {at_step} (micro-batch languages: {})", mix.join(", ")))
            }
            other => other,
        };
        let mut grads: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        let mut objective = 0.0f64;
        let mut correct = 0usize;
        let mut lang_loss: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
        for m in &micro {
            let rows = m.masked.masked_rows();
            if rows.is_empty() {
                continue;
            }
            let (denom, coef) = if m.lang == usize::MAX {
                (step_total as f64, 1.0)
            } else {
                let c = match spec.loss_mode {
                    LossMode::Weighted => weights[m.lang] / n_langs,
                    _ => weights[m.lang],
                };
                (lang_total[m.lang] as f64, c)
            };
            let mut g = Graph::new();
            let p = model.bind(&mut g, true)?;
            let drop = (model.config().dropout_prob > 0.0).then_some(&mut drop_rng);
            let hidden = model.encode(&mut g, &p, &m.masked.batch, drop).map_err(diagnose)?;
            let picked = g.gather_rows(hidden, &rows)?;
            let logits = model.head(&mut g, &p, picked).map_err(diagnose)?;
            let targets: Vec<i64> = rows.iter().map(|&r| m.masked.labels[r]).collect();
            let ce = g.cross_entropy_with_denominator(logits, &targets, IGNORE_INDEX, Some(denom)).map_err(diagnose)?;
            let part = g.value(ce.loss).item() as f64;
            let loss = if coef == 1.0 { ce.loss } else { g.scale(ce.loss, coef as f32)? };
            g.backward(loss).map_err(diagnose)?;
            objective += part * coef;
            if m.lang != usize::MAX {
                let e = lang_loss.entry(m.lang).or_default();
                e.0 += part;
            }
            let lv = g.value(logits).data();
            let hits = targets
                .iter()
                .enumerate()
                .filter(|&(i, &t)| argmax(&lv[i * vocab_size..(i + 1) * vocab_size]) == t as usize)
                .count();
            correct += hits;
            if m.lang != usize::MAX {
                let e = lang_loss.entry(m.lang).or_default();
                e.1 += hits;
                e.2 += targets.len();
            }
            for (acc, v) in grads.iter_mut().zip(p.vars()) {
                if let Some(gr) = g.grad(*v) {
                    for (a, x) in acc.iter_mut().zip(gr) {
                        *a += x;
                    }
                }
            }
        }

        if !objective.is_finite() {
            return Err(diagnose(Error::NonFinite(format!("loss {objective}"))));
        }
        state.step += 1;
        let lr = lr_at(state.step, opt);
        adam_update(model, &mut state, &grads, lr, opt);

        let acc = if step_total == 0 { 0.0 } else { correct as f64 / step_total as f64 };
        metrics.push(MetricRecord {
            round: spec.round,
            step: state.step,
            lang: "all".into(),
            loss: objective,
            lr,
            masked_acc: acc,
        });
        for (l, (loss, hits, count)) in lang_loss {
            let code = &langs[l];
            let prev = state.running_loss.get(code).copied().unwrap_or(loss);
            state.running_loss.insert(code.clone(), 0.9 * prev + 0.1 * loss);
            metrics.push(MetricRecord {
                round: spec.round,
                step: state.step,
                lang: code.clone(),
                loss,
                lr,
                masked_acc: if count == 0 { 0.0 } else { hits as f64 / count as f64 },
            });
        }
        if spec.loss_mode == LossMode::Mean {
            let prev = state.running_loss.get("all").copied().unwrap_or(objective);
            state.running_loss.insert("all".into(), 0.9 * prev + 0.1 * objective);
        }
    }
    Ok(TrainOutcome { state, metrics, truncated })
}

fn pick_weighted(weights: &[f64], rng: &mut Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
