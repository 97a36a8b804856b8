//! Synthetic multilingual corpora with an exact translation oracle.
//!
//! Each toy language maps a shared concept inventory to its own surface
//! lexicon, applies an invertible clause-level word-order permutation,
//! and carries its own punctuation and number-format conventions. Because
//! the mapping is bijective, any sentence can be translated exactly, which
//! makes corpus-level scores meaningful at desk scale.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Language tag, e.g. `E`, `L1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lang(pub String);

impl Lang {
    pub fn new(tag: impl Into<String>) -> Self {
        Lang(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Lang {
    fn from(s: &str) -> Self {
        Lang(s.to_string())
    }
}

/// A translation direction, source to target.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Direction {
    pub src: Lang,
    pub tgt: Lang,
}

impl Direction {
    pub fn new(src: impl Into<Lang>, tgt: impl Into<Lang>) -> Self {
        Direction {
            src: src.into(),
            tgt: tgt.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        Direction {
            src: self.tgt.clone(),
            tgt: self.src.clone(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

/// Clause-level word order, applied per consecutive triple of content
/// tokens. All three permutations are their own inverse.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum WordOrder {
    Svo,
    Sov,
    Vso,
}

impl WordOrder {
    /// Permutes complete triples in place; a trailing partial group is
    /// left untouched.
    pub fn apply<T>(&self, tokens: &mut [T]) {
        for triple in tokens.chunks_exact_mut(3) {
            match self {
                WordOrder::Svo => {}
                WordOrder::Sov => triple.swap(1, 2),
                WordOrder::Vso => triple.swap(0, 1),
            }
        }
    }

    /// Inverse permutation; the three orders are involutions.
    pub fn invert<T>(&self, tokens: &mut [T]) {
        self.apply(tokens);
    }
}

/// Digit-grouping and date-separator convention.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct NumberFormat {
    pub group_sep: Option<char>,
    pub decimal_sep: char,
    pub date_sep: char,
}

/// Sentence-final and quote glyphs.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PunctuationSet {
    pub final_glyph: String,
    pub quote_open: String,
    pub quote_close: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToyLanguage {
    pub id: Lang,
    /// Concept id -> surface token; bijective by construction.
    lexicon: Vec<String>,
    #[serde(skip)]
    reverse: HashMap<String, u32>,
    pub word_order: WordOrder,
    pub number_format: NumberFormat,
    pub punctuation: PunctuationSet,
}

impl ToyLanguage {
    pub fn concept_count(&self) -> usize {
        self.lexicon.len()
    }

    pub fn surface(&self, concept: u32) -> Option<&str> {
        self.lexicon.get(concept as usize).map(|s| s.as_str())
    }

    pub fn concept_of(&self, token: &str) -> Option<u32> {
        self.reverse.get(token).copied()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.lexicon.iter().map(|s| s.as_str())
    }

    fn rebuild_reverse(&mut self) {
        self.reverse = self
            .lexicon
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
    }

    /// Restores derived state after deserialization.
    pub fn finalize(mut self) -> Self {
        self.rebuild_reverse();
        self
    }
}

/// Provenance of a sentence pair.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Authentic,
    SyntheticAt,
    SyntheticNat,
    CycleTranslated,
}

impl Origin {
    pub fn is_synthetic(self) -> bool {
        matches!(self, Origin::SyntheticAt | Origin::SyntheticNat)
    }
}

/// One parallel example with language tags and provenance.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub src_lang: Lang,
    pub tgt_lang: Lang,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub teacher_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub round: Option<u32>,
}

impl SentencePair {
    pub fn authentic(
        id: impl Into<String>,
        src_lang: Lang,
        tgt_lang: Lang,
        src: Vec<String>,
        tgt: Vec<String>,
    ) -> Result<Self> {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::invalid_argument(
                "authentic pair with an empty side",
            ));
        }
        Ok(SentencePair {
            id: id.into(),
            src_lang,
            tgt_lang,
            src,
            tgt,
            origin: Origin::Authentic,
            teacher_id: None,
            round: None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn synthetic(
        id: impl Into<String>,
        src_lang: Lang,
        tgt_lang: Lang,
        src: Vec<String>,
        tgt: Vec<String>,
        origin: Origin,
        teacher_id: impl Into<String>,
        round: u32,
    ) -> Result<Self> {
        if !origin.is_synthetic() {
            return Err(Error::invalid_argument(
                "synthetic constructor with non-synthetic origin",
            ));
        }
        Ok(SentencePair {
            id: id.into(),
            src_lang,
            tgt_lang,
            src,
            tgt,
            origin,
            teacher_id: Some(teacher_id.into()),
            round: Some(round),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.origin == Origin::Authentic {
            if self.src.is_empty() || self.tgt.is_empty() {
                return Err(Error::invalid_argument(format!(
                    "authentic pair {} has an empty side",
                    self.id
                )));
            }
            if self.teacher_id.is_some() {
                return Err(Error::invalid_argument(format!(
                    "authentic pair {} carries a teacher id",
                    self.id
                )));
            }
        }
        if self.round.is_some() != self.origin.is_synthetic() {
            return Err(Error::invalid_argument(format!(
                "pair {}: round must be present iff origin is synthetic",
                self.id
            )));
        }
        Ok(())
    }
}

/// A language-independent sentence: concept ids plus literal slots whose
/// strings are carried verbatim into every realization.
#[derive(Clone, PartialEq, Debug)]
pub struct ConceptSentence {
    pub concepts: Vec<ConceptToken>,
    /// Positions of number/date literals within `concepts`.
    pub slots: Vec<usize>,
    /// Whether the content span is wrapped in quote glyphs.
    pub quoted: bool,
}

#[derive(Clone, PartialEq, Debug)]
pub enum ConceptToken {
    Word(u32),
    Literal(String),
}

impl ConceptSentence {
    pub fn validate(&self) -> Result<()> {
        for &slot in &self.slots {
            match self.concepts.get(slot) {
                Some(ConceptToken::Literal(s)) if s.chars().any(|c| c.is_ascii_digit()) => {}
                _ => {
                    return Err(Error::invalid_argument(format!(
                        "slot {slot} does not hold a digit literal"
                    )))
                }
            }
        }
        Ok(())
    }
}

const CONSONANTS: &[char] = &[
    'b', 'c', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'w', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];
const FINAL_GLYPHS: &[&str] = &[".", "!", "。"];
const QUOTE_PAIRS: &[(&str, &str)] = &[("\"", "\""), ("„", "“"), ("«", "»"), ("「", "」")];

pub const MIN_CONCEPT_VOCAB: usize = 10;

fn lang_rng(seed: u64, id: &str) -> ChaCha20Rng {
    // Mix the tag into the stream so equal seeds still give distinct
    // languages for distinct tags.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h)
}

/// Deterministically generates a toy language with a bijective lexicon of
/// `concept_vocab_size` entries.
pub fn generate_language(
    seed: u64,
    id: impl Into<Lang>,
    concept_vocab_size: usize,
) -> Result<ToyLanguage> {
    let id = id.into();
    if concept_vocab_size < MIN_CONCEPT_VOCAB {
        return Err(Error::invalid_argument(format!(
            "concept_vocab_size {concept_vocab_size} below minimum {MIN_CONCEPT_VOCAB}"
        )));
    }
    let mut rng = lang_rng(seed, id.as_str());

    let mut consonants = CONSONANTS.to_vec();
    consonants.shuffle(&mut rng);
    consonants.truncate(10);
    let mut vowels = VOWELS.to_vec();
    vowels.shuffle(&mut rng);
    vowels.truncate(4);

    let mut lexicon = Vec::with_capacity(concept_vocab_size);
    let mut seen = std::collections::HashSet::new();
    while lexicon.len() < concept_vocab_size {
        let word = make_word(&mut rng, &consonants, &vowels);
        if seen.insert(word.clone()) {
            lexicon.push(word);
        }
    }

    let word_order = *[WordOrder::Svo, WordOrder::Sov, WordOrder::Vso]
        .choose(&mut rng)
        .unwrap();
    let number_format = NumberFormat {
        group_sep: *[Some(','), Some('.'), Some(' '), None]
            .choose(&mut rng)
            .unwrap(),
        decimal_sep: *['.', ','].choose(&mut rng).unwrap(),
        date_sep: *['-', '/', '.'].choose(&mut rng).unwrap(),
    };
    let (open, close) = *QUOTE_PAIRS.choose(&mut rng).unwrap();
    let punctuation = PunctuationSet {
        final_glyph: (*FINAL_GLYPHS.choose(&mut rng).unwrap()).to_string(),
        quote_open: open.to_string(),
        quote_close: close.to_string(),
    };

    let mut lang = ToyLanguage {
        id,
        lexicon,
        reverse: HashMap::new(),
        word_order,
        number_format,
        punctuation,
    };
    lang.rebuild_reverse();
    Ok(lang)
}

fn make_word(rng: &mut impl Rng, consonants: &[char], vowels: &[char]) -> String {
    let syllables = rng.gen_range(2..=4);
    let mut word = String::new();
    for _ in 0..syllables {
        word.push(*consonants.choose(rng).unwrap());
        word.push(*vowels.choose(rng).unwrap());
        if rng.gen_bool(0.3) {
            word.push(*consonants.choose(rng).unwrap());
        }
    }
    word
}

/// The standard six-language setup: pivot `E` plus `L1`..`L5`.
pub fn standard_languages(seed: u64, concept_vocab_size: usize) -> Result<Vec<ToyLanguage>> {
    let mut langs = vec![generate_language(seed, "E", concept_vocab_size)?];
    for i in 1..=5u64 {
        langs.push(generate_language(
            seed.wrapping_add(i),
            format!("L{i}").as_str(),
            concept_vocab_size,
        )?);
    }
    Ok(langs)
}

/// Zipf-weighted concept sampler so a toy corpus has frequent and rare
/// words like a real one.
struct ZipfTable {
    cum: Vec<f64>,
}

impl ZipfTable {
    fn new(n: usize, exponent: f64) -> Self {
        let mut cum = Vec::with_capacity(n);
        let mut total = 0.0;
        for i in 0..n {
            total += 1.0 / ((i + 1) as f64).powf(exponent);
            cum.push(total);
        }
        ZipfTable { cum }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cum.last().unwrap();
        let x = rng.gen_range(0.0..total);
        self.cum.partition_point(|&c| c <= x)
    }
}

const LITERAL_RATE: f64 = 0.10;
const QUOTE_RATE: f64 = 0.05;

fn sample_literal(rng: &mut impl Rng, fmt: &NumberFormat) -> String {
    match rng.gen_range(0..10) {
        0..=3 => {
            // integer, grouped when long
            let digits = rng.gen_range(1..=5);
            let mut s = String::new();
            s.push(char::from_digit(rng.gen_range(1..10), 10).unwrap());
            for _ in 1..digits {
                s.push(char::from_digit(rng.gen_range(0..10), 10).unwrap());
            }
            if digits > 3 {
                if let Some(sep) = fmt.group_sep {
                    if sep != ' ' {
                        let cut = s.len() - 3;
                        s.insert(cut, sep);
                    }
                }
            }
            s
        }
        4..=6 => {
            let whole = rng.gen_range(0..100);
            let frac = rng.gen_range(0..10);
            format!("{whole}{}{frac}", fmt.decimal_sep)
        }
        _ => {
            let year = rng.gen_range(1900..2030);
            let second = rng.gen_range(1..99);
            format!("{year}{}{second:02}", fmt.date_sep)
        }
    }
}

fn sample_concept_sentence(
    rng: &mut impl Rng,
    zipf: &ZipfTable,
    fmt: &NumberFormat,
) -> ConceptSentence {
    // Content length 2..=36; with punctuation and optional quotes the
    // realized sentence stays within 3..=40 tokens.
    let mut len = 2;
    while len < 36 && rng.gen_bool(0.82) {
        len += 1;
    }
    let mut concepts: Vec<ConceptToken> = (0..len)
        .map(|_| ConceptToken::Word(zipf.sample(rng) as u32))
        .collect();
    let mut slots = Vec::new();
    if rng.gen_bool(LITERAL_RATE) {
        let pos = rng.gen_range(0..concepts.len());
        concepts[pos] = ConceptToken::Literal(sample_literal(rng, fmt));
        slots.push(pos);
    }
    let quoted = rng.gen_bool(QUOTE_RATE);
    ConceptSentence {
        concepts,
        slots,
        quoted,
    }
}

/// Renders a concept sentence in a language: lexicon mapping, word-order
/// permutation over content triples, quote wrapping, final punctuation.
pub fn realize(lang: &ToyLanguage, cs: &ConceptSentence) -> Result<Vec<String>> {
    let mut content: Vec<String> = Vec::with_capacity(cs.concepts.len());
    for token in &cs.concepts {
        match token {
            ConceptToken::Word(c) => match lang.surface(*c) {
                Some(s) => content.push(s.to_string()),
                None => {
                    return Err(Error::invalid_argument(format!(
                        "concept {c} outside lexicon of {}",
                        lang.id
                    )))
                }
            },
            ConceptToken::Literal(s) => content.push(s.clone()),
        }
    }
    lang.word_order.apply(&mut content);
    let mut out = Vec::with_capacity(content.len() + 3);
    if cs.quoted {
        out.push(lang.punctuation.quote_open.clone());
    }
    out.extend(content);
    if cs.quoted {
        out.push(lang.punctuation.quote_close.clone());
    }
    out.push(lang.punctuation.final_glyph.clone());
    Ok(out)
}

/// Inverse of [`realize`]: recovers the concept sentence from surface
/// tokens of `lang`.
pub fn parse(lang: &ToyLanguage, tokens: &[String]) -> Result<ConceptSentence> {
    let mut rest: &[String] = tokens;
    if let Some(last) = rest.last() {
        if *last == lang.punctuation.final_glyph {
            rest = &rest[..rest.len() - 1];
        }
    }
    let quoted = rest.len() >= 2
        && rest[0] == lang.punctuation.quote_open
        && rest[rest.len() - 1] == lang.punctuation.quote_close;
    if quoted {
        rest = &rest[1..rest.len() - 1];
    }
    let mut content: Vec<ConceptToken> = Vec::with_capacity(rest.len());
    for token in rest {
        if token.chars().any(|c| c.is_ascii_digit()) {
            content.push(ConceptToken::Literal(token.clone()));
        } else if let Some(c) = lang.concept_of(token) {
            content.push(ConceptToken::Word(c));
        } else {
            return Err(Error::UnknownToken(token.clone()));
        }
    }
    lang.word_order.invert(&mut content);
    let slots = content
        .iter()
        .enumerate()
        .filter_map(|(i, t)| matches!(t, ConceptToken::Literal(_)).then_some(i))
        .collect();
    Ok(ConceptSentence {
        concepts: content,
        slots,
        quoted,
    })
}

/// Exact translation between two toy languages. Concepts are preserved,
/// word order converted, and literal slots copied verbatim.
pub fn ground_truth_translate(
    src: &ToyLanguage,
    tgt: &ToyLanguage,
    tokens: &[String],
) -> Result<Vec<String>> {
    let cs = parse(src, tokens)?;
    realize(tgt, &cs)
}

/// Deterministic parallel corpus of `n` pairs; every pair translates
/// exactly under [`ground_truth_translate`].
pub fn generate_parallel(
    a: &ToyLanguage,
    b: &ToyLanguage,
    n: usize,
    seed: u64,
) -> Result<Vec<SentencePair>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let zipf = ZipfTable::new(a.concept_count(), 1.1);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let cs = sample_concept_sentence(&mut rng, &zipf, &a.number_format);
        let src = realize(a, &cs)?;
        let tgt = realize(b, &cs)?;
        pairs.push(SentencePair::authentic(
            format!("{}-{}-s{}-{:06}", a.id, b.id, seed, i),
            a.id.clone(),
            b.id.clone(),
            src,
            tgt,
        )?);
    }
    Ok(pairs)
}

/// Deterministic monolingual corpus in one language.
pub fn generate_monolingual(lang: &ToyLanguage, n: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let zipf = ZipfTable::new(lang.concept_count(), 1.1);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let cs = sample_concept_sentence(&mut rng, &zipf, &lang.number_format);
        out.push(realize(lang, &cs)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Perturbation {
    Drop(usize),
    SwapWithNext(usize),
}

/// The exact perturbations [`degrade_monolingual`] will apply:
/// `ceil(severity * len)` positions, each dropped or swapped.
pub fn degrade_plan(len: usize, severity: f64, seed: u64) -> Result<Vec<Perturbation>> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::invalid_argument(format!(
            "severity {severity} outside [0,1]"
        )));
    }
    let k = (severity * len as f64).ceil() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(&mut rng);
    positions.truncate(k);
    positions.sort_unstable();
    Ok(positions
        .into_iter()
        .map(|p| {
            if rng.gen_bool(0.5) {
                Perturbation::Drop(p)
            } else {
                Perturbation::SwapWithNext(p)
            }
        })
        .collect())
}

/// Drops or permutes `ceil(severity * len)` tokens; the output is never
/// empty.
pub fn degrade_monolingual(tokens: &[String], severity: f64, seed: u64) -> Result<Vec<String>> {
    let plan = degrade_plan(tokens.len(), severity, seed)?;
    let mut out: Vec<Option<String>> = tokens.iter().cloned().map(Some).collect();
    let mut live = tokens.len();
    for step in plan {
        match step {
            Perturbation::Drop(p) => {
                if live > 1 && out[p].is_some() {
                    out[p] = None;
                    live -= 1;
                }
            }
            Perturbation::SwapWithNext(p) => {
                if let Some(q) = (p + 1..tokens.len()).find(|&q| out[q].is_some()) {
                    out.swap(p, q);
                } else if let Some(q) = (0..p).rev().find(|&q| out[q].is_some()) {
                    out.swap(p, q);
                }
            }
        }
    }
    Ok(out.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(seed: u64, id: &str) -> ToyLanguage {
        generate_language(seed, id, 2000).unwrap()
    }

    #[test]
    fn generate_language_respects_size_and_bijectivity() {
        let l = lang(7, "L1");
        assert_eq!(l.concept_count(), 2000);
        for (i, w) in l.surfaces().enumerate() {
            assert_eq!(l.concept_of(w), Some(i as u32), "round trip for {w}");
        }
        assert!(!l.punctuation.final_glyph.is_empty());
    }

    #[test]
    fn generate_language_rejects_tiny_vocab() {
        assert!(generate_language(1, "X", 9).is_err());
        assert!(generate_language(1, "X", 10).is_ok());
    }

    #[test]
    fn same_seed_is_byte_identical_and_seeds_differ() {
        let a = lang(7, "L1");
        let b = lang(7, "L1");
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = lang(8, "L1");
        assert!(a.surfaces().zip(c.surfaces()).any(|(x, y)| x != y));
    }

    #[test]
    fn distinct_languages_overlap_below_five_percent() {
        let a = lang(7, "L1");
        let b = lang(8, "L2");
        let set: std::collections::HashSet<&str> = a.surfaces().collect();
        let shared = b.surfaces().filter(|w| set.contains(w)).count();
        assert!(
            (shared as f64) < 0.05 * 2000.0,
            "lexicon overlap too high: {shared}"
        );
    }

    #[test]
    fn parallel_pairs_translate_exactly() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        let pairs = generate_parallel(&a, &b, 200, 11).unwrap();
        assert_eq!(pairs.len(), 200);
        for p in &pairs {
            p.validate().unwrap();
            assert!(p.src.len() >= 3 && p.src.len() <= 40, "len {}", p.src.len());
            let t = ground_truth_translate(&a, &b, &p.src).unwrap();
            assert_eq!(t, p.tgt, "pair {}", p.id);
        }
    }

    #[test]
    fn generate_parallel_empty_and_deterministic() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        assert!(generate_parallel(&a, &b, 0, 5).unwrap().is_empty());
        let x = generate_parallel(&a, &b, 1000, 5).unwrap();
        let y = generate_parallel(&a, &b, 1000, 5).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn identity_and_round_trip_translation() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        let pairs = generate_parallel(&a, &b, 50, 3).unwrap();
        for p in &pairs {
            assert_eq!(ground_truth_translate(&a, &a, &p.src).unwrap(), p.src);
            let there = ground_truth_translate(&a, &b, &p.src).unwrap();
            let back = ground_truth_translate(&b, &a, &there).unwrap();
            assert_eq!(back, p.src);
        }
    }

    #[test]
    fn literals_are_copied_verbatim() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        let pairs = generate_parallel(&a, &b, 2000, 13).unwrap();
        let mut with_literal = 0usize;
        for p in &pairs {
            for tok in &p.src {
                if tok.chars().any(|c| c.is_ascii_digit()) {
                    with_literal += 1;
                    assert!(p.tgt.contains(tok), "literal {tok} missing from target");
                    break;
                }
            }
        }
        let frac = with_literal as f64 / pairs.len() as f64;
        assert!((0.05..=0.15).contains(&frac), "literal fraction {frac}");
    }

    #[test]
    fn date_literal_survives_translation() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        let mut tokens: Vec<String> = a.surfaces().take(3).map(String::from).collect();
        tokens.push("2006-07".to_string());
        tokens.push(a.punctuation.final_glyph.clone());
        let out = ground_truth_translate(&a, &b, &tokens).unwrap();
        assert!(out.contains(&"2006-07".to_string()));
    }

    #[test]
    fn unknown_token_is_reported() {
        let a = lang(7, "E");
        let b = lang(8, "L1");
        let tokens = vec!["notaword".to_string()];
        match ground_truth_translate(&a, &b, &tokens) {
            Err(Error::UnknownToken(t)) => assert_eq!(t, "notaword"),
            other => panic!("expected unknown-token error, got {other:?}"),
        }
    }

    #[test]
    fn degrade_zero_severity_is_identity() {
        let tokens: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        assert_eq!(degrade_monolingual(&tokens, 0.0, 1).unwrap(), tokens);
    }

    #[test]
    fn degrade_plan_counts_are_forced() {
        let plan = degrade_plan(10, 0.5, 42).unwrap();
        assert_eq!(plan.len(), 5);
        let plan = degrade_plan(10, 1.0, 42).unwrap();
        assert_eq!(plan.len(), 10);
    }

    #[test]
    fn degrade_output_is_nonempty_and_changed() {
        let tokens: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        for seed in 0..20 {
            let out = degrade_monolingual(&tokens, 1.0, seed).unwrap();
            assert!(!out.is_empty());
            assert_ne!(out, tokens, "seed {seed} left input unchanged");
        }
    }

    #[test]
    fn word_order_permutations_invert() {
        for order in [WordOrder::Svo, WordOrder::Sov, WordOrder::Vso] {
            let mut v: Vec<u32> = (0..11).collect();
            let original = v.clone();
            order.apply(&mut v);
            order.invert(&mut v);
            assert_eq!(v, original);
        }
    }

    #[test]
    fn standard_languages_cover_six_tags() {
        let langs = standard_languages(99, 500).unwrap();
        let tags: Vec<&str> = langs.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(tags, ["E", "L1", "L2", "L3", "L4", "L5"]);
    }
}
