//! Word-error-rate diversity scores and threshold filtering.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityConfig {
    pub threshold: f64,
    pub enabled: bool,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self { threshold: 0.0, enabled: false }
    }
}

impl DiversityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::Config(format!("diversity threshold {} must be ≥ 0", self.threshold)));
        }
        Ok(())
    }

    /// Whether a score passes; always true when the filter is disabled.
    pub fn accepts(&self, score: f64) -> bool {
        !self.enabled || score >= self.threshold
    }
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x.as_ref() != y.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the reference length.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Input("word error rate needs a non-empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// WER between the last `t_s` words of the source and of the generation.
pub fn diversity_score<S: AsRef<str>, T: AsRef<str>>(source: &[S], generated: &[T], t_s: usize) -> Result<f64> {
    if source.len() != generated.len() {
        return Err(Error::Contract(format!(
            "source has {} words, generation has {}",
            source.len(),
            generated.len()
        )));
    }
    let n = source.len();
    if t_s == 0 || t_s > n {
        return Err(Error::Contract(format!("t_s = {t_s} outside [1, {n}]")));
    }
    wer(&source[n - t_s..], &generated[n - t_s..])
}

/// Anything carrying a diversity score.
pub trait Scored {
    fn diversity(&self) -> Option<f64>;
}

/// Keeps items whose score is at least `threshold`, preserving order.
/// Unscored items count as 0.
pub fn select_diverse_batch<R: Scored + Clone>(records: &[R], config: &DiversityConfig) -> Vec<R> {
    records
        .iter()
        .filter(|r| config.accepts(r.diversity().unwrap_or(0.0)))
        .cloned()
        .collect()
}

impl Scored for f64 {
    fn diversity(&self) -> Option<f64> {
        Some(*self)
    }
}
