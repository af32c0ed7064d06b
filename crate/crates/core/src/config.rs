//! Experiment configuration in flat `section.key = value` form.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! one of [`ExperimentConfig::KEYS`]; anything else is an error, as is a
//! key given twice. Values left out keep their defaults. Sections:
//!
//! ```text
//! model.max_seq_len            positions (default 64)
//! model.hidden_size            width (64)
//! model.num_heads              attention heads (4)
//! model.num_layers             encoder layers (2)
//! model.ffn_inner_size         feed-forward width (256)
//! model.vocab_size             BPE budget; the model uses the trained size (2048)
//! model.dropout_prob           (0.1)
//! model.tie_embeddings         share input and output embeddings (true)
//! masking.mask_prob            selection probability (0.15)
//! masking.replace_with_mask    share of selections set to MASK (0.8)
//! masking.replace_with_random  share set to a random token (0.1)
//! masking.keep_original        share left unchanged (0.1)
//! optimizer.learning_rate      peak rate (1e-4)
//! optimizer.warmup_steps       (100)
//! optimizer.total_steps        schedule length (1000)
//! optimizer.batch_size         sentences per micro-batch (16)
//! optimizer.grad_accum_steps   micro-batches per update (1)
//! optimizer.beta1 / beta2      moment decay (0.9 / 0.999)
//! optimizer.epsilon            (1e-8)
//! optimizer.weight_decay       decoupled, matrices only (0.01)
//! round.k_percent              train share of each split (80)
//! round.t_percent              masked share of words (15)
//! round.generation_source_fraction  share of held-out sentences used (1.0)
//! round.rounds                 (3)
//! round.steps                  updates per round; `auto` = optimizer.total_steps
//! round.loss_mode              mean | weighted | convex
//! round.retrain_from_scratch   (true)
//! round.baseline               one round, nothing generated (false)
//! round.literal_append         keep MASKs in the generation context (false)
//! diversity.enabled            apply the threshold filter (false)
//! diversity.threshold          minimum WER to keep a generation (0)
//! experiment.seed              root of every random stream (0)
//! experiment.corpus            corpus directory
//! experiment.output            output directory
//! experiment.tokenizer         existing tokenizer directory (optional)
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::active::RoundConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{MaskingPolicy, OptimizerConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub masking: MaskingPolicy,
    pub optimizer: OptimizerConfig,
    pub round: RoundConfig,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub tokenizer: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "model.max_seq_len",
        "model.hidden_size",
        "model.num_heads",
        "model.num_layers",
        "model.ffn_inner_size",
        "model.vocab_size",
        "model.dropout_prob",
        "model.tie_embeddings",
        "masking.mask_prob",
        "masking.replace_with_mask",
        "masking.replace_with_random",
        "masking.keep_original",
        "optimizer.learning_rate",
        "optimizer.warmup_steps",
        "optimizer.total_steps",
        "optimizer.batch_size",
        "optimizer.grad_accum_steps",
        "optimizer.beta1",
        "optimizer.beta2",
        "optimizer.epsilon",
        "optimizer.weight_decay",
        "round.k_percent",
        "round.t_percent",
        "round.generation_source_fraction",
        "round.rounds",
        "round.steps",
        "round.loss_mode",
        "round.retrain_from_scratch",
        "round.baseline",
        "round.literal_append",
        "diversity.enabled",
        "diversity.threshold",
        "experiment.seed",
        "experiment.corpus",
        "experiment.output",
        "experiment.tokenizer",
    ];

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_owned()) {
                return Err(Error::Config(format!("line {}: `{k}` given twice", n + 1)));
            }
            cfg.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads, parses and validates a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        let m = &mut self.masking;
        let o = &mut self.optimizer;
        let r = &mut self.round;
        match (section, field) {
            ("model", f) if ModelConfig::KEYS.contains(&f) => self.model.set(f, value)?,
            ("masking", "mask_prob") => m.mask_prob = parse(key, value)?,
            ("masking", "replace_with_mask") => m.replace_with_mask = parse(key, value)?,
            ("masking", "replace_with_random") => m.replace_with_random = parse(key, value)?,
            ("masking", "keep_original") => m.keep_original = parse(key, value)?,
            ("optimizer", "learning_rate") => o.learning_rate = parse(key, value)?,
            ("optimizer", "warmup_steps") => o.warmup_steps = parse(key, value)?,
            ("optimizer", "total_steps") => o.total_steps = parse(key, value)?,
            ("optimizer", "batch_size") => o.batch_size = parse(key, value)?,
            ("optimizer", "grad_accum_steps") => o.grad_accum_steps = parse(key, value)?,
            ("optimizer", "beta1") => o.beta1 = parse(key, value)?,
            ("optimizer", "beta2") => o.beta2 = parse(key, value)?,
            ("optimizer", "epsilon") => o.epsilon = parse(key, value)?,
            ("optimizer", "weight_decay") => o.weight_decay = parse(key, value)?,
            ("round", "k_percent") => r.k_percent = parse(key, value)?,
            ("round", "t_percent") => r.t_percent = parse(key, value)?,
            ("round", "generation_source_fraction") => r.generation_source_fraction = parse(key, value)?,
            ("round", "rounds") => r.rounds = parse(key, value)?,
            ("round", "steps") => r.steps = if value == "auto" { None } else { Some(parse(key, value)?) },
            ("round", "loss_mode") => r.loss_mode = value.parse()?,
            ("round", "retrain_from_scratch") => r.retrain_from_scratch = parse(key, value)?,
            ("round", "baseline") => r.baseline = parse(key, value)?,
            ("round", "literal_append") => r.literal_append = parse(key, value)?,
            ("diversity", "enabled") => r.diversity.enabled = parse(key, value)?,
            ("diversity", "threshold") => r.diversity.threshold = parse(key, value)?,
            ("experiment", "seed") => self.seed = parse(key, value)?,
            ("experiment", "corpus") => self.corpus = Some(PathBuf::from(value)),
            ("experiment", "output") => self.output = Some(PathBuf::from(value)),
            ("experiment", "tokenizer") => self.tokenizer = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.masking.validate()?;
        self.optimizer.validate()?;
        self.round.validate()
    }

    /// Every key with its current value, in [`Self::KEYS`] order. Parsing
    /// the result gives back an equal config.
    pub fn to_text(&self) -> String {
        let (m, o, r, md) = (&self.masking, &self.optimizer, &self.round, &self.model);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let values: Vec<Option<String>> = vec![
            Some(md.max_seq_len.to_string()),
            Some(md.hidden_size.to_string()),
            Some(md.num_heads.to_string()),
            Some(md.num_layers.to_string()),
            Some(md.ffn_inner_size.to_string()),
            Some(md.vocab_size.to_string()),
            Some(md.dropout_prob.to_string()),
            Some(md.tie_embeddings.to_string()),
            Some(m.mask_prob.to_string()),
            Some(m.replace_with_mask.to_string()),
            Some(m.replace_with_random.to_string()),
            Some(m.keep_original.to_string()),
            Some(o.learning_rate.to_string()),
            Some(o.warmup_steps.to_string()),
            Some(o.total_steps.to_string()),
            Some(o.batch_size.to_string()),
            Some(o.grad_accum_steps.to_string()),
            Some(o.beta1.to_string()),
            Some(o.beta2.to_string()),
            Some(o.epsilon.to_string()),
            Some(o.weight_decay.to_string()),
            Some(r.k_percent.to_string()),
            Some(r.t_percent.to_string()),
            Some(r.generation_source_fraction.to_string()),
            Some(r.rounds.to_string()),
            Some(r.steps.map_or("auto".into(), |s| s.to_string())),
            Some(r.loss_mode.to_string()),
            Some(r.retrain_from_scratch.to_string()),
            Some(r.baseline.to_string()),
            Some(r.literal_append.to_string()),
            Some(r.diversity.enabled.to_string()),
            Some(r.diversity.threshold.to_string()),
            Some(self.seed.to_string()),
            path(&self.corpus),
            path(&self.output),
            path(&self.tokenizer),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            if let Some(v) = v {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
