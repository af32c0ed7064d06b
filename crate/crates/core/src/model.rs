//! Encoder-only transformer with a masked-language-modeling head.
//!
//! Post-norm layers in the RoBERTa style:
//!
//! ```text
//! x   = LN(tok[ids] + pos[0..T])
//! x   = LN(x + (softmax(QKᵀ/√d + pad) V) Wo + bo)          per layer
//! x   = LN(x + gelu(x W1 + b1) W2 + b2)                   per layer
//! out = LN(gelu(x Wd + bd)) Eᵀ + b_out                    E = tok when tied
//! ```
//!
//! Trainable scalar count, with `V` vocab, `T` max length, `h` hidden,
//! `f` feed-forward width and `L` layers:
//!
//! ```text
//! V·h + T·h + 2h                               embeddings + norm
//! + L·(4h² + 4h + 2hf + f + h + 4h)            attention, feed-forward, two norms
//! + h² + h + 2h + V                            head dense, head norm, output bias
//! + V·h                                        only when untied
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};
use crate::seed::{rng_from, Rng};
use crate::tokenizer::{is_special, Tokenizer, MASK_ID, NUM_SPECIAL, PAD_ID};

pub const CONFIG_FILE: &str = "config.kv";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const WEIGHTS_INDEX_FILE: &str = "weights.index.tsv";

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub max_seq_len: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_inner_size: usize,
    pub vocab_size: usize,
    pub dropout_prob: f32,
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    /// Desk-scale model.
    fn default() -> Self {
        Self {
            max_seq_len: 64,
            hidden_size: 64,
            num_heads: 4,
            num_layers: 2,
            ffn_inner_size: 256,
            vocab_size: 2048,
            dropout_prob: 0.1,
            tie_embeddings: true,
        }
    }
}

impl ModelConfig {
    /// The 264M-parameter configuration: 10 layers, hidden 768, 6 heads,
    /// 250k vocabulary, length 256, feed-forward 4×hidden.
    pub fn large() -> Self {
        Self {
            max_seq_len: 256,
            hidden_size: 768,
            num_heads: 6,
            num_layers: 10,
            ffn_inner_size: 4 * 768,
            vocab_size: 250_000,
            dropout_prob: 0.1,
            tie_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_heads == 0 || self.hidden_size == 0 || self.hidden_size % self.num_heads != 0 {
            return fail(format!(
                "hidden_size {} must be a positive multiple of num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.max_seq_len < 2 {
            return fail(format!("max_seq_len must be at least 2, got {}", self.max_seq_len));
        }
        if self.vocab_size <= NUM_SPECIAL as usize {
            return fail(format!("vocab_size must exceed the {NUM_SPECIAL} special tokens"));
        }
        if self.num_layers == 0 || self.ffn_inner_size == 0 {
            return fail("num_layers and ffn_inner_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return fail(format!("dropout_prob must be in [0, 1), got {}", self.dropout_prob));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    /// Closed-form trainable parameter count (see module docs).
    pub fn param_count(&self) -> u64 {
        param_count(self)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "max_seq_len={}\nhidden_size={}\nnum_heads={}\nnum_layers={}\nffn_inner_size={}\nvocab_size={}\ndropout_prob={}\ntie_embeddings={}\n",
            self.max_seq_len,
            self.hidden_size,
            self.num_heads,
            self.num_layers,
            self.ffn_inner_size,
            self.vocab_size,
            self.dropout_prob,
            self.tie_embeddings
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v)?;
            seen.insert(k.to_owned());
        }
        for key in Self::KEYS {
            if !seen.contains(*key) {
                return Err(Error::Config(format!("missing model key `{key}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub const KEYS: &'static [&'static str] = &[
        "max_seq_len",
        "hidden_size",
        "num_heads",
        "num_layers",
        "ffn_inner_size",
        "vocab_size",
        "dropout_prob",
        "tie_embeddings",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value `{value}` for model key `{key}`"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "max_seq_len" => self.max_seq_len = int()?,
            "hidden_size" => self.hidden_size = int()?,
            "num_heads" => self.num_heads = int()?,
            "num_layers" => self.num_layers = int()?,
            "ffn_inner_size" => self.ffn_inner_size = int()?,
            "vocab_size" => self.vocab_size = int()?,
            "dropout_prob" => self.dropout_prob = value.parse().map_err(|_| bad())?,
            "tie_embeddings" => self.tie_embeddings = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Config(format!("unknown model key `{key}`"))),
        }
        Ok(())
    }
}

/// Closed-form trainable parameter count (see module docs).
pub fn param_count(c: &ModelConfig) -> u64 {
    let (v, t, h, f, l) = (
        c.vocab_size as u64,
        c.max_seq_len as u64,
        c.hidden_size as u64,
        c.ffn_inner_size as u64,
        c.num_layers as u64,
    );
    let embeddings = v * h + t * h + 2 * h;
    let layer = 4 * h * h + 4 * h + 2 * h * f + f + h + 4 * h;
    let head = h * h + h + 2 * h + v;
    let untied = if c.tie_embeddings { 0 } else { v * h };
    embeddings + l * layer + head + untied
}

/// Token ids padded to a rectangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    /// `true` marks a padded position.
    pub pad_mask: Vec<bool>,
    pub batch: usize,
    pub seq: usize,
}

impl Batch {
    pub fn new(ids: Vec<u32>, pad_mask: Vec<bool>, batch: usize, seq: usize) -> Result<Self> {
        if batch == 0 || seq == 0 || ids.len() != batch * seq || pad_mask.len() != ids.len() {
            return Err(Error::Shape(format!(
                "batch of {batch}×{seq} with {} ids and {} mask entries",
                ids.len(),
                pad_mask.len()
            )));
        }
        Ok(Self { ids, pad_mask, batch, seq })
    }

    /// Right-pads `seqs` with PAD to the longest one.
    pub fn from_sequences(seqs: &[Vec<u32>]) -> Result<Self> {
        let seq = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * seq);
        let mut pad_mask = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            ids.extend_from_slice(s);
            pad_mask.extend(std::iter::repeat_n(false, s.len()));
            ids.extend(std::iter::repeat_n(PAD_ID, seq - s.len()));
            pad_mask.extend(std::iter::repeat_n(true, seq - s.len()));
        }
        Self::new(ids, pad_mask, seqs.len(), seq)
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq
    }
}

struct LayerSlots {
    q_w: usize,
    q_b: usize,
    k_w: usize,
    k_b: usize,
    v_w: usize,
    v_b: usize,
    o_w: usize,
    o_b: usize,
    attn_g: usize,
    attn_b: usize,
    ff_in_w: usize,
    ff_in_b: usize,
    ff_out_w: usize,
    ff_out_b: usize,
    ff_g: usize,
    ff_b: usize,
}

struct Slots {
    tok: usize,
    pos: usize,
    emb_g: usize,
    emb_b: usize,
    layers: Vec<LayerSlots>,
    head_w: usize,
    head_b: usize,
    head_g: usize,
    head_beta: usize,
    decoder: Option<usize>,
    out_bias: usize,
}

/// Parameter names and shapes in storage order.
fn layout(c: &ModelConfig) -> (Vec<(String, Vec<usize>)>, Slots) {
    let (v, t, h, f) = (c.vocab_size, c.max_seq_len, c.hidden_size, c.ffn_inner_size);
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>| {
        specs.push((name, shape));
        specs.len() - 1
    };
    let tok = add("embeddings.token".into(), vec![v, h]);
    let pos = add("embeddings.position".into(), vec![t, h]);
    let emb_g = add("embeddings.norm.gamma".into(), vec![h]);
    let emb_b = add("embeddings.norm.beta".into(), vec![h]);
    let mut layers = Vec::new();
    for i in 0..c.num_layers {
        let p = |s: &str| format!("layers.{i}.{s}");
        layers.push(LayerSlots {
            q_w: add(p("attn.query.weight"), vec![h, h]),
            q_b: add(p("attn.query.bias"), vec![h]),
            k_w: add(p("attn.key.weight"), vec![h, h]),
            k_b: add(p("attn.key.bias"), vec![h]),
            v_w: add(p("attn.value.weight"), vec![h, h]),
            v_b: add(p("attn.value.bias"), vec![h]),
            o_w: add(p("attn.output.weight"), vec![h, h]),
            o_b: add(p("attn.output.bias"), vec![h]),
            attn_g: add(p("attn.norm.gamma"), vec![h]),
            attn_b: add(p("attn.norm.beta"), vec![h]),
            ff_in_w: add(p("ffn.in.weight"), vec![h, f]),
            ff_in_b: add(p("ffn.in.bias"), vec![f]),
            ff_out_w: add(p("ffn.out.weight"), vec![f, h]),
            ff_out_b: add(p("ffn.out.bias"), vec![h]),
            ff_g: add(p("ffn.norm.gamma"), vec![h]),
            ff_b: add(p("ffn.norm.beta"), vec![h]),
        });
    }
    let head_w = add("head.dense.weight".into(), vec![h, h]);
    let head_b = add("head.dense.bias".into(), vec![h]);
    let head_g = add("head.norm.gamma".into(), vec![h]);
    let head_beta = add("head.norm.beta".into(), vec![h]);
    let decoder = (!c.tie_embeddings).then(|| add("head.decoder.weight".into(), vec![v, h]));
    let out_bias = add("head.decoder.bias".into(), vec![v]);
    let slots = Slots { tok, pos, emb_g, emb_b, layers, head_w, head_b, head_g, head_beta, decoder, out_bias };
    (specs, slots)
}

fn truncated_normal(rng: &mut Rng, n: usize) -> Vec<f32> {
    let dist = Normal::new(0.0, INIT_STD).expect("valid normal");
    (0..n)
        .map(|_| loop {
            let x: f64 = dist.sample(rng);
            if x.abs() <= 2.0 * INIT_STD {
                break x as f32;
            }
        })
        .collect()
}

/// The masked language model.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerMLM {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Parameters recorded on a graph, indexed like [`TransformerMLM::params`].
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl TransformerMLM {
    /// Weights ~ N(0, 0.02²) truncated at ±2σ; biases 0; norm gains 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, _) = layout(&config);
        let mut rng = rng_from(seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (name, shape) in specs {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".gamma") {
                vec![1.0; n]
            } else if name.ends_with(".beta") || name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                truncated_normal(&mut rng, n)
            };
            params.push(Tensor::new(shape, data)?.with_grad());
            names.push(name);
        }
        Ok(Self { config, names, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.params[i])
    }

    /// Number of scalars actually stored.
    pub fn num_scalars(&self) -> u64 {
        self.params.iter().map(|p| p.numel() as u64).sum()
    }

    /// Records the parameters on `g`, differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<Bound> {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p) } else { g.constant(p) })
            .collect::<Result<_>>()?;
        Ok(Bound(vars))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.seq > self.config.max_seq_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_seq_len {}; truncate before calling",
                batch.seq, self.config.max_seq_len
            )));
        }
        if let Some(&bad) = batch.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::Index(format!("token id {bad} out of range {}", self.config.vocab_size)));
        }
        Ok(())
    }

    /// Final hidden states `[B·T × hidden]`. Dropout is applied only when
    /// `dropout` is given.
    pub fn encode(&self, g: &mut Graph, p: &Bound, batch: &Batch, mut dropout: Option<&mut Rng>) -> Result<Var> {
        self.check_batch(batch)?;
        let (_, s) = layout(&self.config);
        let v = &p.0;
        let c = &self.config;
        let drop_p = if dropout.is_some() { c.dropout_prob } else { 0.0 };
        let positions: Vec<u32> = (0..batch.batch).flat_map(|_| 0..batch.seq as u32).collect();
        let key_valid: Vec<bool> = batch.pad_mask.iter().map(|&pad| !pad).collect();

        let tok = g.embedding(v[s.tok], &batch.ids)?;
        let pos = g.embedding(v[s.pos], &positions)?;
        let x = g.add(tok, pos)?;
        let mut x = g.layer_norm(x, v[s.emb_g], v[s.emb_b])?;
        if let Some(rng) = dropout.as_deref_mut() {
            x = g.dropout(x, drop_p, rng)?;
        }
        for l in &s.layers {
            let linear = |g: &mut Graph, x: Var, w: usize, b: usize| -> Result<Var> {
                let y = g.matmul(x, v[w])?;
                g.add_bias(y, v[b])
            };
            let q = linear(g, x, l.q_w, l.q_b)?;
            let k = linear(g, x, l.k_w, l.k_b)?;
            let val = linear(g, x, l.v_w, l.v_b)?;
            let a = g.attention(q, k, val, &key_valid, batch.batch, c.num_heads)?;
            let mut o = linear(g, a, l.o_w, l.o_b)?;
            if let Some(rng) = dropout.as_deref_mut() {
                o = g.dropout(o, drop_p, rng)?;
            }
            let r = g.add(x, o)?;
            x = g.layer_norm(r, v[l.attn_g], v[l.attn_b])?;

            let hmid = linear(g, x, l.ff_in_w, l.ff_in_b)?;
            let hmid = g.gelu(hmid)?;
            let mut f = linear(g, hmid, l.ff_out_w, l.ff_out_b)?;
            if let Some(rng) = dropout.as_deref_mut() {
                f = g.dropout(f, drop_p, rng)?;
            }
            let r = g.add(x, f)?;
            x = g.layer_norm(r, v[l.ff_g], v[l.ff_b])?;
        }
        Ok(x)
    }

    /// Vocabulary logits `[M × V]` for hidden rows `[M × hidden]`.
    pub fn head(&self, g: &mut Graph, p: &Bound, hidden: Var) -> Result<Var> {
        let (_, s) = layout(&self.config);
        let v = &p.0;
        let y = g.matmul(hidden, v[s.head_w])?;
        let y = g.add_bias(y, v[s.head_b])?;
        let y = g.gelu(y)?;
        let y = g.layer_norm(y, v[s.head_g], v[s.head_beta])?;
        let table = s.decoder.map_or(v[s.tok], |d| v[d]);
        let logits = g.matmul_nt(y, table)?;
        g.add_bias(logits, v[s.out_bias])
    }

    /// Logits `[B × T × V]` with dropout disabled.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false)?;
        let h = self.encode(&mut g, &p, batch, None)?;
        let logits = self.head(&mut g, &p, h)?;
        g.value(logits).reshaped(&[batch.batch, batch.seq, self.config.vocab_size])
    }

    /// Logits at selected rows of a batch, `[rows.len() × V]`.
    pub fn logits_at(&self, batch: &Batch, rows: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false)?;
        let h = self.encode(&mut g, &p, batch, None)?;
        let picked = g.gather_rows(h, rows)?;
        let logits = self.head(&mut g, &p, picked)?;
        Ok(g.value(logits).clone())
    }

    /// Most likely non-special token for a prompt whose last id is MASK.
    /// Equal logits resolve to the smallest id.
    pub fn predict_masked(&self, prompt_ids: &[u32]) -> Result<(u32, Vec<f32>)> {
        match prompt_ids.split_last() {
            Some((&MASK_ID, rest)) if !rest.contains(&MASK_ID) => {}
            _ => return Err(Error::Contract("prompt must contain exactly one MASK, in the final position".into())),
        }
        let batch = Batch::from_sequences(&[prompt_ids.to_vec()])?;
        let logits = self.logits_at(&batch, &[prompt_ids.len() - 1])?.into_data();
        let best = argmax_non_special(&logits);
        Ok((best, logits))
    }

    /// SHA-256 of the little-endian weight bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            for v in p.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes `config.kv`, `weights.bin`, `weights.index.tsv` and the tokenizer
    /// files into `dir`.
    pub fn save(&self, dir: &Path, tokenizer: &Tokenizer) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, self.config.to_kv()).map_err(|e| Error::io(&cfg_path, e))?;
        tokenizer.save(dir, true)?;
        let mut bytes = Vec::with_capacity(self.num_scalars() as usize * 4);
        let mut index = String::from("name\toffset\tshape\n");
        for (name, p) in self.names.iter().zip(&self.params) {
            let shape: Vec<String> = p.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(index, "{name}\t{}\t{}", bytes.len(), shape.join("x"));
            for v in p.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let w = dir.join(WEIGHTS_FILE);
        fs::write(&w, bytes).map_err(|e| Error::io(&w, e))?;
        let i = dir.join(WEIGHTS_INDEX_FILE);
        fs::write(&i, index).map_err(|e| Error::io(&i, e))
    }

    /// Loads a checkpoint written by [`TransformerMLM::save`].
    pub fn load(dir: &Path) -> Result<(Self, Tokenizer)> {
        let cfg_path = dir.join(CONFIG_FILE);
        let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = ModelConfig::from_kv(&cfg_text)?;
        let tokenizer = Tokenizer::load(dir)?;
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::format(
                &cfg_path,
                format!("vocab_size {} but tokenizer has {}", config.vocab_size, tokenizer.vocab_size()),
            ));
        }
        let idx_path = dir.join(WEIGHTS_INDEX_FILE);
        let index = fs::read_to_string(&idx_path).map_err(|e| Error::io(&idx_path, e))?;
        let w_path = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&w_path).map_err(|e| Error::io(&w_path, e))?;

        let (specs, _) = layout(&config);
        let mut entries: BTreeMap<String, (usize, Vec<usize>)> = BTreeMap::new();
        for (n, line) in index.lines().enumerate().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format(&idx_path, format!("malformed line {}", n + 1));
            if cols.len() != 3 {
                return Err(bad());
            }
            let offset = cols[1].parse::<usize>().map_err(|_| bad())?;
            let shape = cols[2].split('x').map(|d| d.parse::<usize>().map_err(|_| bad())).collect::<Result<_>>()?;
            entries.insert(cols[0].to_owned(), (offset, shape));
        }
        let expected: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>() * 4).sum();
        if bytes.len() != expected || entries.len() != specs.len() {
            return Err(Error::format(
                &w_path,
                format!("{} bytes / {} tensors, index expects {expected} / {}", bytes.len(), entries.len(), specs.len()),
            ));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (name, shape) in specs {
            let (offset, got) = entries
                .remove(&name)
                .ok_or_else(|| Error::format(&idx_path, format!("missing tensor `{name}`")))?;
            if got != shape {
                return Err(Error::format(&idx_path, format!("`{name}` has shape {got:?}, want {shape:?}")));
            }
            let n: usize = shape.iter().product();
            let end = offset + n * 4;
            if end > bytes.len() {
                return Err(Error::format(&w_path, format!("`{name}` runs past the end of the file")));
            }
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push(Tensor::new(shape, data)?.with_grad());
            names.push(name);
        }
        Ok((Self { config, names, params }, tokenizer))
    }
}

/// Index of the largest logit among non-special ids; ties go to the smaller id.
pub fn argmax_non_special(logits: &[f32]) -> u32 {
    let mut best = NUM_SPECIAL;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in logits.iter().enumerate().skip(NUM_SPECIAL as usize) {
        if v > best_v {
            best_v = v;
            best = i as u32;
        }
    }
    debug_assert!(!is_special(best));
    best
}

/// Uniform draw of a non-special token id.
pub fn random_regular_token(rng: &mut Rng, vocab_size: usize) -> u32 {
    rng.random_range(NUM_SPECIAL..vocab_size as u32)
}
