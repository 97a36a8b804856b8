//! Parallel-data preparation: punctuation normalization, language-id
//! screening, exact dedup, illegal-character / length / ratio limits, and
//! the temperature-based language sampler.
//!
//! Rules run in a fixed order (normalize, langid, dedup, illegal
//! characters, length, ratio) and each removed pair is charged to the
//! first rule that rejects it, so reports reconcile exactly.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toycorpus::{Direction, Lang, SentencePair};

pub const MAX_WORDS: usize = 250;
pub const MAX_LENGTH_RATIO: f64 = 3.0;
const TRIGRAM_SMOOTHING: f64 = 0.1;

pub const RULE_LANGID: &str = "langid";
pub const RULE_DEDUP: &str = "dedup";
pub const RULE_ILLEGAL: &str = "illegal_chars";
pub const RULE_LENGTH: &str = "length";
pub const RULE_RATIO: &str = "ratio";

/// Accounting for one filter run: `output_count` plus the per-rule
/// removals always sums back to `input_count`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub output_count: usize,
    pub removed_by_rule: BTreeMap<String, usize>,
}

impl FilterReport {
    pub fn removed_total(&self) -> usize {
        self.removed_by_rule.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.output_count + self.removed_total() == self.input_count
    }
}

/// Character-trigram naive-Bayes language classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LangIdModel {
    /// Shared trigram inventory; index is the feature id.
    trigrams: Vec<String>,
    #[serde(skip)]
    trigram_index: HashMap<String, usize>,
    /// Per language: log prior and per-trigram log probabilities, with one
    /// extra slot at the end for unseen trigrams.
    languages: BTreeMap<Lang, LangTable>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LangTable {
    log_prior: f64,
    log_probs: Vec<f64>,
}

impl LangIdModel {
    pub fn languages(&self) -> impl Iterator<Item = &Lang> {
        self.languages.keys()
    }

    /// Sum of the modeled trigram distribution in probability space;
    /// 1.0 up to float noise for every language.
    pub fn probability_sum(&self, lang: &Lang) -> Option<f64> {
        self.languages
            .get(lang)
            .map(|t| t.log_probs.iter().map(|lp| lp.exp()).sum())
    }

    pub fn classify(&self, sentence: &[String]) -> Lang {
        let feats = trigram_ids(&sentence.join(" "), &self.trigram_index, self.trigrams.len());
        self.languages
            .iter()
            .map(|(lang, table)| {
                let score: f64 = table.log_prior
                    + feats.iter().map(|&f| table.log_probs[f]).sum::<f64>();
                (lang, score)
            })
            .max_by(|(la, sa), (lb, sb)| {
                sa.partial_cmp(sb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| lb.cmp(la))
            })
            .map(|(lang, _)| lang.clone())
            .expect("model has at least two languages")
    }
}

fn trigram_ids(text: &str, index: &HashMap<String, usize>, unk: usize) -> Vec<usize> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < 3 {
        return vec![unk];
    }
    chars
        .windows(3)
        .map(|w| {
            let key: String = w.iter().collect();
            index.get(&key).copied().unwrap_or(unk)
        })
        .collect()
}

pub const MIN_LANGID_LANGUAGES: usize = 2;
pub const MIN_LANGID_SENTENCES: usize = 100;

/// Trains the trigram classifier on per-language monolingual corpora.
pub fn train_langid(corpora: &BTreeMap<Lang, Vec<Vec<String>>>) -> Result<LangIdModel> {
    if corpora.len() < MIN_LANGID_LANGUAGES {
        return Err(Error::invalid_argument(format!(
            "language id needs at least {MIN_LANGID_LANGUAGES} languages, got {}",
            corpora.len()
        )));
    }
    for (lang, sentences) in corpora {
        if sentences.len() < MIN_LANGID_SENTENCES {
            return Err(Error::invalid_argument(format!(
                "language {lang} has {} sentences, need {MIN_LANGID_SENTENCES}",
                sentences.len()
            )));
        }
    }

    let mut trigram_set: std::collections::BTreeSet<String> = Default::default();
    let mut per_lang_counts: BTreeMap<&Lang, HashMap<String, u64>> = BTreeMap::new();
    for (lang, sentences) in corpora {
        let counts = per_lang_counts.entry(lang).or_default();
        for s in sentences {
            let text = s.join(" ");
            let chars: Vec<char> = text.chars().collect();
            for w in chars.windows(3) {
                let key: String = w.iter().collect();
                trigram_set.insert(key.clone());
                *counts.entry(key).or_insert(0) += 1;
            }
        }
    }
    let trigrams: Vec<String> = trigram_set.into_iter().collect();
    let trigram_index: HashMap<String, usize> = trigrams
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    let total_sentences: usize = corpora.values().map(|v| v.len()).sum();
    let vocab = trigrams.len() + 1; // one extra slot for unseen trigrams
    let mut languages = BTreeMap::new();
    for (lang, sentences) in corpora {
        let counts = &per_lang_counts[lang];
        let total: u64 = counts.values().sum();
        let denom = total as f64 + TRIGRAM_SMOOTHING * vocab as f64;
        let mut log_probs = Vec::with_capacity(vocab);
        for t in &trigrams {
            let c = counts.get(t).copied().unwrap_or(0) as f64;
            log_probs.push(((c + TRIGRAM_SMOOTHING) / denom).ln());
        }
        log_probs.push((TRIGRAM_SMOOTHING / denom).ln());
        languages.insert(
            lang.clone(),
            LangTable {
                log_prior: (sentences.len() as f64 / total_sentences as f64).ln(),
                log_probs,
            },
        );
    }
    Ok(LangIdModel {
        trigrams,
        trigram_index,
        languages,
    })
}

/// Replaces compatibility punctuation variants (fullwidth ASCII, NBSP,
/// zero-width characters); language-specific glyphs are left alone.
pub fn normalize_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\u{FF01}'..='\u{FF5E}' => {
                // fullwidth ASCII block maps onto ASCII by constant offset
                out.push(char::from_u32(c as u32 - 0xFEE0).unwrap_or(c));
            }
            '\u{00A0}' => out.push(' '),
            '\u{200B}' | '\u{200C}' | '\u{200D}' | '\u{FEFF}' => {}
            _ => out.push(c),
        }
    }
    out
}

fn normalize_side(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| {
            normalize_token(t)
                .split_whitespace()
                .map(String::from)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn has_illegal_chars(tokens: &[String]) -> bool {
    tokens.iter().any(|t| {
        t.chars()
            .any(|c| c.is_control() && c != '\t' && c != '\n')
    })
}

fn ratio_exceeded(src_len: usize, tgt_len: usize) -> bool {
    if src_len == 0 || tgt_len == 0 {
        return true;
    }
    let hi = src_len.max(tgt_len) as f64;
    let lo = src_len.min(tgt_len) as f64;
    hi / lo > MAX_LENGTH_RATIO
}

/// Applies the full preparation pipeline and returns the survivors with a
/// reconciling report. Filtering never fails; it only removes.
pub fn filter_pairs(
    pairs: &[SentencePair],
    langid: &LangIdModel,
) -> (Vec<SentencePair>, FilterReport) {
    let mut report = FilterReport {
        input_count: pairs.len(),
        ..Default::default()
    };
    for rule in [RULE_LANGID, RULE_DEDUP, RULE_ILLEGAL, RULE_LENGTH, RULE_RATIO] {
        report.removed_by_rule.insert(rule.to_string(), 0);
    }
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut kept = Vec::new();
    for pair in pairs {
        let mut p = pair.clone();
        p.src = normalize_side(&p.src);
        p.tgt = normalize_side(&p.tgt);

        let rejected_by = if langid.classify(&p.src) != p.src_lang
            || langid.classify(&p.tgt) != p.tgt_lang
        {
            Some(RULE_LANGID)
        } else if !seen.insert((p.src.join(" "), p.tgt.join(" "))) {
            Some(RULE_DEDUP)
        } else if has_illegal_chars(&p.src) || has_illegal_chars(&p.tgt) {
            Some(RULE_ILLEGAL)
        } else if p.src.len() > MAX_WORDS || p.tgt.len() > MAX_WORDS {
            Some(RULE_LENGTH)
        } else if ratio_exceeded(p.src.len(), p.tgt.len()) {
            Some(RULE_RATIO)
        } else {
            None
        };

        match rejected_by {
            Some(rule) => *report.removed_by_rule.get_mut(rule).unwrap() += 1,
            None => kept.push(p),
        }
    }
    report.output_count = kept.len();
    debug_assert!(report.reconciles());
    (kept, report)
}

/// Temperature-based sampler over per-direction corpus sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub sizes: BTreeMap<Direction, u64>,
}

impl SamplerConfig {
    pub fn new(temperature: f64, sizes: BTreeMap<Direction, u64>) -> Result<Self> {
        let config = SamplerConfig { temperature, sizes };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.sizes.values().all(|&n| n == 0) {
            return Err(Error::invalid_argument(
                "all corpus sizes are zero; nothing to sample",
            ));
        }
        Ok(())
    }

    /// Sampling probabilities `n_i^(1/T)`, renormalized.
    pub fn probabilities(&self) -> Result<BTreeMap<Direction, f64>> {
        self.validate()?;
        let exponent = 1.0 / self.temperature;
        let weights: Vec<f64> = self
            .sizes
            .values()
            .map(|&n| (n as f64).powf(exponent))
            .collect();
        let total: f64 = weights.iter().sum();
        Ok(self
            .sizes
            .keys()
            .cloned()
            .zip(weights.into_iter().map(|w| w / total))
            .collect())
    }
}

/// Draws `total` direction choices under the sampler law and returns the
/// per-direction counts.
pub fn temperature_sample(
    config: &SamplerConfig,
    total: usize,
    seed: u64,
) -> Result<BTreeMap<Direction, usize>> {
    let probs = config.probabilities()?;
    let directions: Vec<&Direction> = probs.keys().collect();
    let mut cumulative = Vec::with_capacity(directions.len());
    let mut acc = 0.0;
    for p in probs.values() {
        acc += p;
        cumulative.push(acc);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Direction, usize> =
        probs.keys().map(|d| (d.clone(), 0)).collect();
    for _ in 0..total {
        let x: f64 = rng.gen_range(0.0..acc);
        let idx = cumulative.partition_point(|&c| c <= x);
        let idx = idx.min(directions.len() - 1);
        *counts.get_mut(directions[idx]).unwrap() += 1;
    }
    Ok(counts)
}
