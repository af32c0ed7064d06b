//! Per-language sentence stores with provenance, persisted as plain text.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/manifest.tsv                          lang, original_count, generated_count, bytes[, family, region]
//! <root>/<lang>/sentences.txt                  original sentences, one per line
//! <root>/<lang>/generated_round_<r>.txt        sentences generated in round r
//! <root>/<lang>/generated_round_<r>.meta       line_number <TAB> source_index <TAB> diversity_score
//! ```
//!
//! Records are kept in the order originals, then generated rounds ascending,
//! which is also the order they are reloaded in. `source_index` refers to that
//! ordering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

pub const SENTENCES_FILE: &str = "sentences.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";
const MISSING_SCORE: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Original,
    Generated { round: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceRecord {
    pub text: String,
    pub provenance: Provenance,
    /// Index of the record this one was generated from.
    pub source_index: Option<usize>,
    pub diversity: Option<f64>,
}

impl SentenceRecord {
    pub fn original(text: impl Into<String>) -> Self {
        Self { text: text.into(), provenance: Provenance::Original, source_index: None, diversity: None }
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// A sentence produced by generation, ready to be added to a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct NewSentence {
    pub text: String,
    pub source_index: usize,
    pub diversity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageDataset {
    lang: String,
    sentences: Vec<SentenceRecord>,
}

pub fn validate_lang(lang: &str) -> Result<()> {
    let ok = lang.chars().next().is_some_and(|c| c.is_ascii_lowercase())
        && lang.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Input(format!("invalid language code `{lang}`")))
    }
}

fn validate_text(lang: &str, text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::Input(format!("empty sentence for `{lang}`")));
    }
    if text.contains(['\n', '\r']) {
        return Err(Error::Input(format!("sentence for `{lang}` contains a line break")));
    }
    Ok(())
}

impl LanguageDataset {
    pub fn new(lang: impl Into<String>, sentences: Vec<SentenceRecord>) -> Result<Self> {
        let lang = lang.into();
        validate_lang(&lang)?;
        for s in &sentences {
            validate_text(&lang, &s.text)?;
        }
        Ok(Self { lang, sentences })
    }

    pub fn from_texts<I, S>(lang: &str, texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(lang, texts.into_iter().map(|t| SentenceRecord::original(t)).collect())
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn sentences(&self) -> &[SentenceRecord] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.sentences.iter().map(|s| s.text.len() + 1).sum()
    }

    fn max_round(&self) -> usize {
        self.sentences
            .iter()
            .filter_map(|s| match s.provenance {
                Provenance::Generated { round } => Some(round),
                Provenance::Original => None,
            })
            .max()
            .unwrap_or(0)
    }
}

/// Optional descriptive fields carried in the manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LanguageMeta {
    pub family: Option<String>,
    pub region: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub lang: String,
    pub original_count: usize,
    pub generated_count: usize,
    pub bytes: usize,
    pub meta: LanguageMeta,
}

/// The union of all language datasets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MultiCorpus {
    langs: BTreeMap<String, LanguageDataset>,
    meta: BTreeMap<String, LanguageMeta>,
}

impl MultiCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: LanguageDataset) {
        self.langs.insert(dataset.lang.clone(), dataset);
    }

    pub fn set_meta(&mut self, lang: &str, meta: LanguageMeta) -> Result<()> {
        if !self.langs.contains_key(lang) {
            return Err(Error::UnknownLanguage(lang.to_owned()));
        }
        self.meta.insert(lang.to_owned(), meta);
        Ok(())
    }

    pub fn meta(&self, lang: &str) -> LanguageMeta {
        self.meta.get(lang).cloned().unwrap_or_default()
    }

    /// Languages in sorted code order.
    pub fn languages(&self) -> impl Iterator<Item = &LanguageDataset> {
        self.langs.values()
    }

    pub fn lang_codes(&self) -> Vec<String> {
        self.langs.keys().cloned().collect()
    }

    pub fn get(&self, lang: &str) -> Option<&LanguageDataset> {
        self.langs.get(lang)
    }

    pub fn num_languages(&self) -> usize {
        self.langs.len()
    }

    pub fn total_sentences(&self) -> usize {
        self.langs.values().map(LanguageDataset::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.langs.is_empty()
    }

    /// Every sentence text, in language order.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.langs.values().flat_map(|d| d.sentences.iter().map(|s| s.text.as_str()))
    }

    pub fn original_texts(&self) -> impl Iterator<Item = &str> {
        self.langs.values().flat_map(|d| {
            d.sentences.iter().filter(|s| s.provenance == Provenance::Original).map(|s| s.text.as_str())
        })
    }

    /// Counts derived from the stored records, so they always agree with them.
    pub fn manifest(&self) -> Vec<ManifestRow> {
        self.langs
            .values()
            .map(|d| {
                let original = d.sentences.iter().filter(|s| s.provenance == Provenance::Original).count();
                ManifestRow {
                    lang: d.lang.clone(),
                    original_count: original,
                    generated_count: d.len() - original,
                    bytes: d.bytes(),
                    meta: self.meta(&d.lang),
                }
            })
            .collect()
    }

    /// Appends generated sentences to `lang` with `Generated(round)` provenance.
    pub fn augment(&mut self, lang: &str, generated: Vec<NewSentence>, round: usize) -> Result<()> {
        if round == 0 {
            return Err(Error::Contract("augmentation rounds start at 1".into()));
        }
        let dataset = self.langs.get_mut(lang).ok_or_else(|| Error::UnknownLanguage(lang.to_owned()))?;
        if generated.is_empty() {
            return Ok(());
        }
        if round < dataset.max_round() {
            return Err(Error::Contract(format!(
                "cannot add round {round} after round {} for `{lang}`",
                dataset.max_round()
            )));
        }
        let existing = dataset.len();
        for g in &generated {
            validate_text(lang, &g.text)?;
            if g.source_index >= existing {
                return Err(Error::Index(format!(
                    "source index {} out of range {existing} for `{lang}`",
                    g.source_index
                )));
            }
        }
        dataset.sentences.extend(generated.into_iter().map(|g| SentenceRecord {
            text: g.text,
            provenance: Provenance::Generated { round },
            source_index: Some(g.source_index),
            diversity: g.diversity,
        }));
        Ok(())
    }

    /// Writes the corpus under `root`, replacing any generated-round files
    /// already there.
    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for d in self.langs.values() {
            let dir = root.join(&d.lang);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (_, path) in generated_files(&dir)? {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                let meta = path.with_extension("meta");
                if meta.exists() {
                    fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?;
                }
            }
            let mut originals = String::new();
            let mut rounds: BTreeMap<usize, (String, String, usize)> = BTreeMap::new();
            let mut seen_generated = false;
            for s in &d.sentences {
                match s.provenance {
                    Provenance::Original => {
                        if seen_generated {
                            return Err(Error::Contract(format!(
                                "`{}` has an original sentence after generated ones",
                                d.lang
                            )));
                        }
                        originals.push_str(&s.text);
                        originals.push('\n');
                    }
                    Provenance::Generated { round } => {
                        seen_generated = true;
                        let (text, meta, line) = rounds.entry(round).or_default();
                        text.push_str(&s.text);
                        text.push('\n');
                        *line += 1;
                        let score = s.diversity.map_or_else(|| MISSING_SCORE.to_owned(), |v| format!("{v}"));
                        let src = s.source_index.ok_or_else(|| {
                            Error::Contract(format!("generated sentence in `{}` has no source", d.lang))
                        })?;
                        let _ = writeln!(meta, "{}\t{src}\t{score}", *line);
                    }
                }
            }
            write_file(&dir.join(SENTENCES_FILE), &originals)?;
            for (round, (text, meta, _)) in rounds {
                write_file(&dir.join(format!("generated_round_{round}.txt")), &text)?;
                write_file(&dir.join(format!("generated_round_{round}.meta")), &meta)?;
            }
        }
        write_file(&root.join(MANIFEST_FILE), &render_manifest(&self.manifest()))
    }

    /// Splits every language into train and held-out parts.
    pub fn split(&self, spec: &SplitSpec) -> Result<CorpusSplit> {
        spec.validate()?;
        let mut out = CorpusSplit::default();
        for d in self.langs.values() {
            let n = d.len();
            if n < 2 {
                return Err(Error::Split {
                    lang: d.lang.clone(),
                    reason: format!("needs at least 2 sentences, has {n}"),
                });
            }
            let n_train = spec.train_count(n);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = rng_from(derive_seed(spec.seed, &format!("lang:{}", d.lang), 0));
            order.shuffle(&mut rng);
            let mut train_idx = order[..n_train].to_vec();
            let mut held_idx = order[n_train..].to_vec();
            train_idx.sort_unstable();
            held_idx.sort_unstable();
            let pick = |idx: &[usize]| idx.iter().map(|&i| d.sentences[i].clone()).collect();
            out.train.insert(LanguageDataset { lang: d.lang.clone(), sentences: pick(&train_idx) });
            out.heldout.insert(LanguageDataset { lang: d.lang.clone(), sentences: pick(&held_idx) });
            out.train_indices.insert(d.lang.clone(), train_idx);
            out.heldout_indices.insert(d.lang.clone(), held_idx);
        }
        out.train.meta = self.meta.clone();
        out.heldout.meta = self.meta.clone();
        Ok(out)
    }
}

/// Train share of a split. `k_percent` defaults to 80.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub k_percent: u32,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { k_percent: 80, seed: 0 }
    }
}

impl SplitSpec {
    pub fn new(k_percent: u32, seed: u64) -> Result<Self> {
        let s = Self { k_percent, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_percent == 0 || self.k_percent > 100 {
            return Err(Error::Config(format!("k_percent must be in (0, 100], got {}", self.k_percent)));
        }
        Ok(())
    }

    /// `⌊k·n/100⌋` clamped to `[1, n−1]`.
    pub fn train_count(&self, n: usize) -> usize {
        let raw = (self.k_percent as usize * n) / 100;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Result of [`MultiCorpus::split`]. The index maps give, per language, the
/// positions in the parent dataset of each record of the part.
#[derive(Clone, Debug, Default)]
pub struct CorpusSplit {
    pub train: MultiCorpus,
    pub heldout: MultiCorpus,
    pub train_indices: BTreeMap<String, Vec<usize>>,
    pub heldout_indices: BTreeMap<String, Vec<usize>>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn generated_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(r) = name.strip_prefix("generated_round_").and_then(|s| s.strip_suffix(".txt")) {
            if let Ok(round) = r.parse::<usize>() {
                out.push((round, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn render_manifest(rows: &[ManifestRow]) -> String {
    let with_meta = rows.iter().any(|r| r.meta != LanguageMeta::default());
    let mut out = String::from("lang\toriginal_count\tgenerated_count\tbytes");
    if with_meta {
        out.push_str("\tfamily\tregion");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.lang, r.original_count, r.generated_count, r.bytes);
        if with_meta {
            let f = r.meta.family.as_deref().unwrap_or("");
            let g = r.meta.region.as_deref().unwrap_or("");
            let _ = write!(out, "\t{f}\t{g}");
        }
        out.push('\n');
    }
    out
}

fn read_lines(lang: &str, path: &Path) -> Result<Vec<String>> {
    let load_err = |reason: String| Error::Load { lang: lang.to_owned(), reason };
    let bytes = fs::read(path).map_err(|e| load_err(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes).map_err(|_| load_err(format!("{} is not valid UTF-8", path.display())))?;
    let mut lines = Vec::new();
    let count = text.split('\n').count();
    for (i, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            // A single trailing newline is the only permitted empty line.
            if i + 1 == count && line.is_empty() {
                continue;
            }
            return Err(load_err(format!("{} has a blank line at {}", path.display(), i + 1)));
        }
        lines.push(line.to_owned());
    }
    Ok(lines)
}

/// Loads a corpus directory.
pub fn load_corpus(root: &Path) -> Result<MultiCorpus> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if path.is_dir() && !name.starts_with('.') {
            dirs.push((name.to_owned(), path));
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Input(format!("{} contains no language directories", root.display())));
    }

    let mut corpus = MultiCorpus::new();
    for (lang, dir) in dirs {
        validate_lang(&lang).map_err(|e| Error::Load { lang: lang.clone(), reason: e.to_string() })?;
        let sentences_path = dir.join(SENTENCES_FILE);
        if !sentences_path.is_file() {
            return Err(Error::Load { lang, reason: format!("missing {}", sentences_path.display()) });
        }
        let mut records: Vec<SentenceRecord> =
            read_lines(&lang, &sentences_path)?.into_iter().map(SentenceRecord::original).collect();
        if records.is_empty() {
            return Err(Error::Load { lang, reason: format!("{} is empty", sentences_path.display()) });
        }
        for (round, path) in generated_files(&dir)? {
            let texts = read_lines(&lang, &path)?;
            let meta_path = path.with_extension("meta");
            let meta = read_lines(&lang, &meta_path)?;
            if meta.len() != texts.len() {
                return Err(Error::format(&meta_path, format!("{} entries for {} sentences", meta.len(), texts.len())));
            }
            let before = records.len();
            for (i, (text, m)) in texts.into_iter().zip(meta).enumerate() {
                let cols: Vec<&str> = m.split('\t').collect();
                let bad = || Error::format(&meta_path, format!("malformed line {}", i + 1));
                if cols.len() != 3 || cols[0].parse::<usize>().ok() != Some(i + 1) {
                    return Err(bad());
                }
                let source_index: usize = cols[1].parse().map_err(|_| bad())?;
                if source_index >= before {
                    return Err(Error::format(&meta_path, format!("source index {source_index} out of range")));
                }
                let diversity = match cols[2] {
                    MISSING_SCORE => None,
                    s => Some(s.parse::<f64>().map_err(|_| bad())?),
                };
                records.push(SentenceRecord {
                    text,
                    provenance: Provenance::Generated { round },
                    source_index: Some(source_index),
                    diversity,
                });
            }
        }
        corpus.insert(LanguageDataset { lang, sentences: records });
    }

    let manifest_path = root.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        apply_manifest(&mut corpus, &manifest_path)?;
    }
    Ok(corpus)
}

fn apply_manifest(corpus: &mut MultiCorpus, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let actual: BTreeMap<String, ManifestRow> = corpus.manifest().into_iter().map(|r| (r.lang.clone(), r)).collect();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 && cols.len() != 6 {
            return Err(Error::format(path, format!("line {} has {} columns", i + 1, cols.len())));
        }
        let lang = cols[0];
        let Some(row) = actual.get(lang) else {
            return Err(Error::format(path, format!("lists unknown language `{lang}`")));
        };
        let counts = (cols[1].parse::<usize>().ok(), cols[2].parse::<usize>().ok());
        if counts != (Some(row.original_count), Some(row.generated_count)) {
            return Err(Error::format(
                path,
                format!(
                    "counts for `{lang}` ({}, {}) disagree with the files ({}, {})",
                    cols[1], cols[2], row.original_count, row.generated_count
                ),
            ));
        }
        if cols.len() == 6 {
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_owned());
            corpus.set_meta(lang, LanguageMeta { family: opt(cols[4]), region: opt(cols[5]) })?;
        }
    }
    Ok(())
}

/// Per-language summary.
#[derive(Clone, Debug, PartialEq)]
pub struct LangStats {
    pub lang: String,
    pub original: usize,
    pub generated_by_round: BTreeMap<usize, usize>,
    pub total: usize,
    pub mean_words: f64,
    pub bytes: usize,
    /// Records whose text repeats an earlier record of the same language.
    pub duplicates: usize,
}

impl LangStats {
    pub fn generated(&self) -> usize {
        self.generated_by_round.values().sum()
    }
}

pub fn stats(corpus: &MultiCorpus) -> Vec<LangStats> {
    corpus
        .languages()
        .map(|d| {
            let mut generated_by_round = BTreeMap::new();
            let mut original = 0;
            for s in &d.sentences {
                match s.provenance {
                    Provenance::Original => original += 1,
                    Provenance::Generated { round } => *generated_by_round.entry(round).or_insert(0) += 1,
                }
            }
            let words: usize = d.sentences.iter().map(SentenceRecord::word_count).sum();
            let mut seen = std::collections::HashSet::new();
            let duplicates = d.sentences.iter().filter(|s| !seen.insert(s.text.as_str())).count();
            LangStats {
                lang: d.lang.clone(),
                original,
                generated_by_round,
                total: d.len(),
                mean_words: words as f64 / d.len().max(1) as f64,
                bytes: d.bytes(),
                duplicates,
            }
        })
        .collect()
}

/// TSV rendering of [`stats`]: one column per generation round seen anywhere.
pub fn render_stats(stats: &[LangStats]) -> String {
    let rounds: std::collections::BTreeSet<usize> =
        stats.iter().flat_map(|s| s.generated_by_round.keys().copied()).collect();
    let mut out = String::from("lang\toriginal\tgenerated");
    for r in &rounds {
        let _ = write!(out, "\tgenerated_round_{r}");
    }
    out.push_str("\ttotal\tmean_words\tbytes\tduplicates\n");
    for s in stats {
        let _ = write!(out, "{}\t{}\t{}", s.lang, s.original, s.generated());
        for r in &rounds {
            let _ = write!(out, "\t{}", s.generated_by_round.get(r).copied().unwrap_or(0));
        }
        let _ = writeln!(out, "\t{}\t{:.4}\t{}\t{}", s.total, s.mean_words, s.bytes, s.duplicates);
    }
    out
}
