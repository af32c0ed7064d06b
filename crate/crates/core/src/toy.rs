//! Deterministic synthetic multilingual corpora for tests and demos.
//!
//! Each language gets its own syllable inventory, a small lexicon built
//! from it, and a phrase grammar with language-specific word order, so
//! sentences are regular enough to learn but varied in length.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::corpus::{LanguageDataset, LanguageMeta, MultiCorpus};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, Rng};

struct Profile {
    code: &'static str,
    family: &'static str,
    region: &'static str,
    onsets: &'static [&'static str],
    vowels: &'static [&'static str],
    /// Adjective after the noun.
    adj_after: bool,
    /// Object before the verb.
    verb_final: bool,
}

const PROFILES: &[Profile] = &[
    Profile {
        code: "fon",
        family: "niger-congo",
        region: "west",
        onsets: &["b", "d", "gb", "kp", "m", "n", "s", "t", "w", "x", "z"],
        vowels: &["a", "e", "ɛ", "i", "o", "ɔ", "u"],
        adj_after: true,
        verb_final: false,
    },
    Profile {
        code: "hau",
        family: "afro-asiatic",
        region: "west",
        onsets: &["b", "d", "f", "g", "k", "m", "n", "r", "s", "sh", "t", "y", "z"],
        vowels: &["a", "e", "i", "o", "u", "aa", "ii"],
        adj_after: true,
        verb_final: false,
    },
    Profile {
        code: "swa",
        family: "niger-congo",
        region: "east",
        onsets: &["ch", "k", "l", "m", "mb", "n", "nd", "p", "s", "t", "w", "z"],
        vowels: &["a", "e", "i", "o", "u"],
        adj_after: true,
        verb_final: false,
    },
    Profile {
        code: "yor",
        family: "niger-congo",
        region: "west",
        onsets: &["b", "d", "f", "g", "j", "k", "l", "m", "r", "ṣ", "t", "w"],
        vowels: &["a", "e", "ẹ", "i", "o", "ọ", "u"],
        adj_after: true,
        verb_final: false,
    },
    Profile {
        code: "amh",
        family: "afro-asiatic",
        region: "east",
        onsets: &["b", "d", "g", "h", "k", "l", "m", "n", "s", "t", "w", "z"],
        vowels: &["a", "ä", "e", "ə", "i", "o", "u"],
        adj_after: false,
        verb_final: true,
    },
    Profile {
        code: "kin",
        family: "niger-congo",
        region: "east",
        onsets: &["b", "g", "k", "m", "n", "r", "rw", "s", "t", "y"],
        vowels: &["a", "e", "i", "o", "u"],
        adj_after: true,
        verb_final: false,
    },
];

/// Number of languages [`toy_corpus`] can produce.
pub const MAX_TOY_LANGUAGES: usize = PROFILES.len();

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    determiners: Vec<String>,
    connectives: Vec<String>,
}

fn word(p: &Profile, rng: &mut Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", p.onsets.choose(rng).expect("onsets"), p.vowels.choose(rng).expect("vowels")))
        .collect()
}

fn words(p: &Profile, rng: &mut Rng, count: usize, syllables: (usize, usize), seen: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(syllables.0..=syllables.1);
        let w = word(p, rng, n);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn lexicon(p: &Profile, rng: &mut Rng) -> Lexicon {
    let mut seen = BTreeSet::new();
    Lexicon {
        determiners: words(p, rng, 3, (1, 1), &mut seen),
        connectives: words(p, rng, 2, (1, 2), &mut seen),
        nouns: words(p, rng, 40, (2, 3), &mut seen),
        verbs: words(p, rng, 20, (2, 3), &mut seen),
        adjectives: words(p, rng, 12, (2, 2), &mut seen),
    }
}

fn noun_phrase(p: &Profile, lex: &Lexicon, rng: &mut Rng, out: &mut Vec<String>) {
    let pick = |v: &Vec<String>, rng: &mut Rng| v.choose(rng).expect("non-empty").clone();
    if rng.random_bool(0.5) {
        out.push(pick(&lex.determiners, rng));
    }
    let noun = pick(&lex.nouns, rng);
    if rng.random_bool(0.4) {
        let adj = pick(&lex.adjectives, rng);
        if p.adj_after {
            out.extend([noun, adj]);
        } else {
            out.extend([adj, noun]);
        }
    } else {
        out.push(noun);
    }
}

fn clause(p: &Profile, lex: &Lexicon, rng: &mut Rng, out: &mut Vec<String>) {
    noun_phrase(p, lex, rng, out);
    let verb = lex.verbs.choose(rng).expect("verbs").clone();
    if p.verb_final {
        noun_phrase(p, lex, rng, out);
        out.push(verb);
    } else {
        out.push(verb);
        noun_phrase(p, lex, rng, out);
    }
}

fn sentence(p: &Profile, lex: &Lexicon, rng: &mut Rng) -> String {
    let mut out = Vec::new();
    clause(p, lex, rng, &mut out);
    let extra = rng.random_range(0..3);
    for _ in 0..extra {
        out.push(lex.connectives.choose(rng).expect("connectives").clone());
        clause(p, lex, rng, &mut out);
    }
    out.join(" ")
}

/// `languages` languages with `sentences` distinct sentences each.
pub fn toy_corpus(languages: usize, sentences: usize, seed: u64) -> Result<MultiCorpus> {
    if languages == 0 || languages > PROFILES.len() {
        return Err(Error::Input(format!("toy corpus supports 1 to {} languages", PROFILES.len())));
    }
    if sentences == 0 {
        return Err(Error::Input("toy corpus needs at least one sentence per language".into()));
    }
    let mut corpus = MultiCorpus::new();
    for p in &PROFILES[..languages] {
        let mut rng = rng_from(derive_seed(seed, &format!("lang:{}", p.code), 0));
        let lex = lexicon(p, &mut rng);
        let mut seen = BTreeSet::new();
        let mut texts = Vec::with_capacity(sentences);
        while texts.len() < sentences {
            let s = sentence(p, &lex, &mut rng);
            if seen.insert(s.clone()) {
                texts.push(s);
            }
        }
        corpus.insert(LanguageDataset::from_texts(p.code, texts)?);
        corpus.set_meta(
            p.code,
            LanguageMeta { family: Some(p.family.into()), region: Some(p.region.into()) },
        )?;
    }
    Ok(corpus)
}
