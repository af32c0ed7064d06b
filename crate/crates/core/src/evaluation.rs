//! Held-out masked-token accuracy and pseudo-perplexity.

use rayon::prelude::*;

use crate::corpus::MultiCorpus;
use crate::error::{Error, Result};
use crate::model::{Batch, TransformerMLM};
use crate::nn::kernels::log_sum_exp;
use crate::seed::{derive_seed, rng_from};
use crate::tokenizer::{Tokenizer, BOS_ID, MASK_ID};
use crate::training::{apply_masking, argmax, frame, MaskingPolicy};

/// Frames masked together when measuring accuracy.
const EVAL_BATCH: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MaskedCounts {
    pub correct: usize,
    pub total: usize,
}

impl MaskedCounts {
    /// Fraction correct, 0 when nothing was masked.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Masks `frames` with a generator seeded by `seed` and counts positions
/// where the argmax prediction recovers the original token.
pub fn masked_accuracy(model: &TransformerMLM, frames: &[Vec<u32>], policy: &MaskingPolicy, seed: u64) -> Result<MaskedCounts> {
    if frames.is_empty() {
        return Err(Error::Input("masked accuracy over an empty held-out set".into()));
    }
    policy.validate()?;
    let v = model.config().vocab_size;
    let mut rng = rng_from(seed);
    let mut counts = MaskedCounts::default();
    for chunk in frames.chunks(EVAL_BATCH) {
        let batch = Batch::from_sequences(chunk)?;
        let masked = apply_masking(&batch, policy, v, &mut rng)?;
        let rows = masked.masked_rows();
        if rows.is_empty() {
            continue;
        }
        let logits = model.logits_at(&masked.batch, &rows)?;
        let data = logits.data();
        for (i, &r) in rows.iter().enumerate() {
            counts.correct += usize::from(argmax(&data[i * v..(i + 1) * v]) as i64 == masked.labels[r]);
        }
        counts.total += rows.len();
    }
    Ok(counts)
}

/// Negative log-probability of each token of `frame` (after the leading
/// BOS) with that single position masked. `pack` variants share a batch.
pub fn pseudo_nll(model: &TransformerMLM, frame: &[u32], pack: usize) -> Result<Vec<f64>> {
    if frame.len() < 2 || frame[0] != BOS_ID {
        return Err(Error::Input("pseudo-perplexity needs BOS followed by at least one token".into()));
    }
    if frame.len() > model.config().max_seq_len {
        return Err(Error::Input(format!(
            "sentence of {} tokens exceeds max_seq_len {}",
            frame.len(),
            model.config().max_seq_len
        )));
    }
    let v = model.config().vocab_size;
    let positions: Vec<usize> = (1..frame.len()).collect();
    let mut out = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(pack.max(1)) {
        let seqs: Vec<Vec<u32>> = chunk
            .iter()
            .map(|&pos| {
                let mut s = frame.to_vec();
                s[pos] = MASK_ID;
                s
            })
            .collect();
        let batch = Batch::from_sequences(&seqs)?;
        let rows: Vec<usize> = chunk.iter().enumerate().map(|(b, &pos)| b * batch.seq + pos).collect();
        let logits = model.logits_at(&batch, &rows)?;
        for (i, &pos) in chunk.iter().enumerate() {
            let row = &logits.data()[i * v..(i + 1) * v];
            out.push(log_sum_exp(row) - f64::from(row[frame[pos] as usize]));
        }
    }
    Ok(out)
}

/// `exp` of the mean masked negative log-likelihood over the sentence's
/// tokens, one position masked at a time.
pub fn pseudo_perplexity(model: &TransformerMLM, sentence_ids: &[u32]) -> Result<f64> {
    if sentence_ids.is_empty() {
        return Err(Error::Input("pseudo-perplexity of an empty sentence".into()));
    }
    let mut framed = Vec::with_capacity(sentence_ids.len() + 1);
    framed.push(BOS_ID);
    framed.extend_from_slice(sentence_ids);
    let nll = pseudo_nll(model, &framed, framed.len())?;
    Ok((nll.iter().sum::<f64>() / nll.len() as f64).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub lang: String,
    pub sentences: usize,
    /// Positions scored by pseudo-perplexity.
    pub tokens: usize,
    pub masked_positions: usize,
    pub masked_token_accuracy: f64,
    pub pseudo_perplexity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub languages: Vec<EvalRow>,
    pub overall: EvalRow,
}

impl EvalReport {
    pub const HEADER: &'static str = "lang\tsentences\ttokens\tmasked\tmasked_acc\tpseudo_ppl";

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in self.languages.iter().chain(std::iter::once(&self.overall)) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
                r.lang, r.sentences, r.tokens, r.masked_positions, r.masked_token_accuracy, r.pseudo_perplexity
            ));
        }
        out
    }
}

/// Evaluates every language of `corpus`. Masking for accuracy uses a
/// per-language stream derived from `seed`.
pub fn evaluate(
    model: &TransformerMLM,
    tokenizer: &Tokenizer,
    corpus: &MultiCorpus,
    policy: &MaskingPolicy,
    seed: u64,
) -> Result<EvalReport> {
    let max_len = model.config().max_seq_len;
    let eval_seed = derive_seed(seed, "eval", 0);
    let mut languages = Vec::new();
    let (mut all_nll, mut all_tokens, mut all_counts, mut all_sent) = (0.0, 0, MaskedCounts::default(), 0);
    for d in corpus.languages() {
        let frames: Vec<Vec<u32>> = d.sentences().iter().map(|s| frame(tokenizer, &s.text, max_len).0).collect();
        let counts = masked_accuracy(model, &frames, policy, derive_seed(eval_seed, &format!("lang:{}", d.lang()), 0))
            .map_err(|e| with_lang(e, d.lang()))?;
        let per_sentence: Vec<Vec<f64>> = frames
            .par_iter()
            .filter(|f| f.len() >= 2)
            .map(|f| pseudo_nll(model, f, f.len()))
            .collect::<Result<_>>()?;
        let nll: f64 = per_sentence.iter().flatten().sum();
        let tokens: usize = per_sentence.iter().map(Vec::len).sum();
        languages.push(EvalRow {
            lang: d.lang().to_string(),
            sentences: frames.len(),
            tokens,
            masked_positions: counts.total,
            masked_token_accuracy: counts.accuracy(),
            pseudo_perplexity: mean_exp(nll, tokens),
        });
        all_nll += nll;
        all_tokens += tokens;
        all_counts.correct += counts.correct;
        all_counts.total += counts.total;
        all_sent += frames.len();
    }
    let overall = EvalRow {
        lang: "all".into(),
        sentences: all_sent,
        tokens: all_tokens,
        masked_positions: all_counts.total,
        masked_token_accuracy: all_counts.accuracy(),
        pseudo_perplexity: mean_exp(all_nll, all_tokens),
    };
    Ok(EvalReport { languages, overall })
}

fn mean_exp(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        // Rounding can put a near-perfect model a hair under 1.
        (sum / n as f64).exp().max(1.0)
    }
}

fn with_lang(e: Error, lang: &str) -> Error {
    match e {
        Error::Input(msg) => Error::Input(format!("{lang}: {msg}")),
        other => other,
    }
}
