//! Shared multilingual subword vocabulary learned with byte-pair-encoding
//! merges over characters.
//!
//! Text is NFC-normalized and split on whitespace. Each word becomes a
//! sequence of characters whose last element carries the end-of-word marker
//! `</w>`, so `"ab"` starts as `["a", "b</w>"]`. Training greedily merges the
//! most frequent adjacent pair, breaking count ties by the smaller
//! `(left, right)` pair in lexicographic order, and stops once the vocabulary
//! budget is reached or no pair occurs at least twice.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const BOS_ID: u32 = 3;
pub const EOS_ID: u32 = 4;
pub const NUM_SPECIAL: u32 = 5;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL as usize] = ["<pad>", "<unk>", "<mask>", "<s>", "</s>"];
pub const MASK_TOKEN: &str = "<mask>";
pub const END_OF_WORD: &str = "</w>";

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MERGES_FILE: &str = "merges.txt";

pub fn is_special(id: u32) -> bool {
    id < NUM_SPECIAL
}

/// NFC normalization followed by whitespace splitting.
pub fn normalize_words(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().map(str::to_owned).collect()
}

/// Whitespace-normalized form of `text`: words joined by single spaces.
pub fn normalize(text: &str) -> String {
    normalize_words(text).join(" ")
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| if i + 1 == chars.len() { format!("{c}{END_OF_WORD}") } else { c.to_string() })
        .collect()
}

/// Token ↔ id bijection. Ids 0–4 are the special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn with_specials() -> Self {
        let mut v = Self { token_to_id: HashMap::new(), id_to_token: Vec::new() };
        for tok in SPECIAL_TOKENS {
            v.insert(tok);
        }
        v
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.to_owned(), id);
        self.id_to_token.push(token.to_owned());
        id
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut v = Self { token_to_id: HashMap::new(), id_to_token: Vec::new() };
        for (i, tok) in tokens.into_iter().enumerate() {
            if i < SPECIAL_TOKENS.len() && tok != SPECIAL_TOKENS[i] {
                return Err(Error::Input(format!("id {i} must be `{}`, found `{tok}`", SPECIAL_TOKENS[i])));
            }
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {tok:?} at id {i}")));
            }
            if v.token_to_id.contains_key(&tok) {
                return Err(Error::Input(format!("duplicate token `{tok}`")));
            }
            v.insert(&tok);
        }
        if v.len() < SPECIAL_TOKENS.len() {
            return Err(Error::Input("vocabulary is missing special tokens".into()));
        }
        Ok(v)
    }
}

/// Ordered merge rules; the rank of a merge is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeTable {
    pairs: Vec<(String, String)>,
}

impl MergeTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

/// Learns a vocabulary of at most `vocab_size` tokens from `corpus`.
pub fn train_bpe<I, S>(corpus: I, vocab_size: usize) -> Result<(Vocab, MergeTable)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    for sentence in corpus {
        for w in normalize_words(sentence.as_ref()) {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::Input("cannot train a tokenizer on an empty corpus".into()));
    }

    let mut base: BTreeSet<String> = BTreeSet::new();
    let mut words: Vec<(Vec<String>, usize)> = Vec::with_capacity(word_counts.len());
    for (w, c) in word_counts {
        let syms = word_symbols(&w);
        base.extend(syms.iter().cloned());
        words.push((syms, c));
    }
    let floor = base.len() + SPECIAL_TOKENS.len();
    if vocab_size < floor {
        return Err(Error::Input(format!(
            "vocab_size {vocab_size} is below the {floor} base symbols and special tokens"
        )));
    }

    let mut vocab = Vocab::with_specials();
    for sym in &base {
        vocab.insert(sym);
    }
    // Symbols are interned as vocab ids while training.
    let mut seqs: Vec<(Vec<u32>, usize)> = words
        .into_iter()
        .map(|(syms, c)| (syms.iter().map(|s| vocab.token_to_id[s]).collect(), c))
        .collect();

    let mut merges = MergeTable::default();
    while vocab.len() < vocab_size {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (seq, c) in &seqs {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += c;
            }
        }
        let best = counts.into_iter().fold(None::<((u32, u32), usize)>, |best, (pair, c)| match best {
            None => Some((pair, c)),
            Some((bp, bc)) => {
                let wins = c > bc
                    || (c == bc
                        && (vocab.token(pair.0), vocab.token(pair.1)) < (vocab.token(bp.0), vocab.token(bp.1)));
                Some(if wins { (pair, c) } else { (bp, bc) })
            }
        });
        let Some(((left, right), count)) = best else { break };
        if count < 2 {
            break;
        }
        let merged = format!("{}{}", vocab.id_to_token[left as usize], vocab.id_to_token[right as usize]);
        let merged_id = vocab.insert(&merged);
        merges
            .pairs
            .push((vocab.id_to_token[left as usize].clone(), vocab.id_to_token[right as usize].clone()));
        for (seq, _) in &mut seqs {
            merge_in_place(seq, left, right, merged_id);
        }
    }
    Ok((vocab, merges))
}

fn merge_in_place(seq: &mut Vec<u32>, left: u32, right: u32, merged: u32) {
    if seq.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

/// A trained vocabulary plus its merge table. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: Vocab,
    merges: MergeTable,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl Tokenizer {
    pub fn new(vocab: Vocab, merges: MergeTable) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.pairs.iter().enumerate() {
            let lookup = |t: &str| {
                vocab.id(t).ok_or_else(|| Error::Input(format!("merge {rank} uses unknown token `{t}`")))
            };
            let (li, ri, mi) = (lookup(l)?, lookup(r)?, lookup(&format!("{l}{r}"))?);
            // A repeated pair keeps its first rank.
            ranks.entry((li, ri)).or_insert((rank, mi));
        }
        Ok(Self { vocab, merges, ranks })
    }

    pub fn train<I, S>(corpus: I, vocab_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let (vocab, merges) = train_bpe(corpus, vocab_size)?;
        Self::new(vocab, merges)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Token ids of one whitespace-free word.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let mut seq: Vec<u32> = word_symbols(word).iter().map(|s| self.vocab.id(s).unwrap_or(UNK_ID)).collect();
        loop {
            let best = seq
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, m)| (rank, w[0], w[1], m)))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, l, r, m)) = best else { break };
            merge_in_place(&mut seq, l, r, m);
        }
        seq
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        normalize_words(text).iter().flat_map(|w| self.encode_word(w)).collect()
    }

    /// Concatenates tokens, turning end-of-word markers into spaces. Padding,
    /// BOS and EOS are dropped; UNK renders inline as its literal text and
    /// MASK as a separate `<mask>` word.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self
                .vocab
                .token(id)
                .ok_or_else(|| Error::Index(format!("token id {id} out of range {}", self.vocab.len())))?;
            match id {
                PAD_ID | BOS_ID | EOS_ID => {}
                MASK_ID => {
                    out.push(' ');
                    out.push_str(tok);
                    out.push(' ');
                }
                _ => out.push_str(tok),
            }
        }
        Ok(normalize(&out.replace(END_OF_WORD, " ")))
    }

    /// Writes `vocab.txt` and `merges.txt` into `dir`. Existing files are kept
    /// unless `force` is set: the vocabulary is fixed once trained.
    pub fn save(&self, dir: &Path, force: bool) -> Result<()> {
        let vocab_path = dir.join(VOCAB_FILE);
        let merges_path = dir.join(MERGES_FILE);
        if !force {
            for p in [&vocab_path, &merges_path] {
                if p.exists() {
                    return Err(Error::Exists(p.clone()));
                }
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut v = self.vocab.id_to_token.join("\n");
        v.push('\n');
        fs::write(&vocab_path, v).map_err(|e| Error::io(&vocab_path, e))?;
        let m: String = self.merges.pairs.iter().map(|(l, r)| format!("{l} {r}\n")).collect();
        fs::write(&merges_path, m).map_err(|e| Error::io(&merges_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab_path = dir.join(VOCAB_FILE);
        let merges_path = dir.join(MERGES_FILE);
        let v = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let vocab = Vocab::from_tokens(v.lines().map(str::to_owned).collect())
            .map_err(|e| Error::format(&vocab_path, e.to_string()))?;
        let m = fs::read_to_string(&merges_path).map_err(|e| Error::io(&merges_path, e))?;
        let mut pairs = Vec::new();
        for (n, line) in m.lines().enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    pairs.push((l.to_owned(), r.to_owned()))
                }
                _ => return Err(Error::format(&merges_path, format!("line {} is not `left right`", n + 1))),
            }
        }
        Self::new(vocab, MergeTable { pairs }).map_err(|e| Error::format(&merges_path, e.to_string()))
    }
}
