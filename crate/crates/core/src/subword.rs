//! Byte-pair subword vocabularies with language-token handling.
//!
//! Training is the classic iterative pair-merge over whitespace words with
//! an end-of-word marker; ties break lexicographically so retraining on the
//! same corpus is reproducible. Language and special tokens are reserved
//! and never split.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::toycorpus::Lang;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
const END_OF_WORD: &str = "</w>";

/// Surface form of a language token, e.g. `<L1>`.
pub fn lang_token(lang: &Lang) -> String {
    format!("<{lang}>")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubwordVocab {
    /// Ordered merge list; position is the merge rank.
    merges: Vec<(String, String)>,
    merge_rank: HashMap<(String, String), usize>,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    language_tokens: BTreeSet<String>,
}

impl SubwordVocab {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(|s| s.as_str())
    }

    pub fn pad_id(&self) -> u32 {
        self.token_to_id[PAD]
    }

    pub fn bos_id(&self) -> u32 {
        self.token_to_id[BOS]
    }

    pub fn eos_id(&self) -> u32 {
        self.token_to_id[EOS]
    }

    pub fn unk_id(&self) -> u32 {
        self.token_to_id[UNK]
    }

    pub fn language_tokens(&self) -> &BTreeSet<String> {
        &self.language_tokens
    }

    pub fn is_language_token_id(&self, id: u32) -> bool {
        self.token(id)
            .map(|t| self.language_tokens.contains(t))
            .unwrap_or(false)
    }

    fn is_special_id(&self, id: u32) -> bool {
        id == self.pad_id() || id == self.bos_id() || id == self.eos_id()
    }

    /// Encodes a pre-tokenized sentence; when a language token is given it
    /// becomes the first id.
    pub fn encode(&self, sentence: &[String], lang_tok: Option<&str>) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(sentence.len() * 2 + 1);
        if let Some(lt) = lang_tok {
            if !self.language_tokens.contains(lt) {
                return Err(Error::invalid_argument(format!(
                    "unknown language token {lt}"
                )));
            }
            ids.push(self.token_to_id[lt]);
        }
        for word in sentence {
            for sym in self.segment_word(word) {
                ids.push(self.id(&sym).unwrap_or_else(|| self.unk_id()));
            }
        }
        Ok(ids)
    }

    /// Splits one word into subword symbols by applying merges in rank
    /// order.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        symbols.push(END_OF_WORD.to_string());
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len() - 1 {
                let key = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.merge_rank.get(&key) {
                    if best.map(|(r, _)| rank < r).unwrap_or(true) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let (left, right) = self.merges[rank].clone();
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Inverse of [`encode`]: drops pad/bos/eos and language tokens, joins
    /// subword pieces back into whitespace tokens.
    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>> {
        let mut words = Vec::new();
        let mut current = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or_else(|| {
                Error::invalid_argument(format!("id {id} out of vocabulary range {}", self.size()))
            })?;
            if self.is_special_id(id) || self.language_tokens.contains(tok) {
                continue;
            }
            if let Some(stem) = tok.strip_suffix(END_OF_WORD) {
                current.push_str(stem);
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
            } else {
                current.push_str(tok);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
        Ok(words)
    }

    /// Plain-text vocabulary file: a `[tokens]` section of
    /// `token<TAB>id` lines followed by an ordered `[merges]` section.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "[tokens]")?;
        for (i, tok) in self.id_to_token.iter().enumerate() {
            let kind = if self.language_tokens.contains(tok) {
                "\tlang"
            } else {
                ""
            };
            writeln!(f, "{tok}\t{i}{kind}")?;
        }
        writeln!(f, "[merges]")?;
        for (a, b) in &self.merges {
            writeln!(f, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)
            .map_err(|e| Error::not_found(format!("{}: {e}", path.display())))?;
        let mut id_to_token: Vec<(u32, String)> = Vec::new();
        let mut language_tokens = BTreeSet::new();
        let mut merges = Vec::new();
        let mut section = "";
        for line in BufReader::new(f).lines() {
            let line = line?;
            if line == "[tokens]" || line == "[merges]" {
                section = if line == "[tokens]" { "tokens" } else { "merges" };
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match section {
                "tokens" => {
                    let mut parts = line.split('\t');
                    let tok = parts
                        .next()
                        .ok_or_else(|| Error::invalid_argument("malformed vocab line"))?;
                    let id: u32 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::invalid_argument("malformed vocab id"))?;
                    if parts.next() == Some("lang") {
                        language_tokens.insert(tok.to_string());
                    }
                    id_to_token.push((id, tok.to_string()));
                }
                "merges" => {
                    let mut parts = line.splitn(2, ' ');
                    let a = parts.next().unwrap_or_default().to_string();
                    let b = parts.next().unwrap_or_default().to_string();
                    merges.push((a, b));
                }
                _ => return Err(Error::invalid_argument("vocab file missing section header")),
            }
        }
        id_to_token.sort_by_key(|(id, _)| *id);
        let id_to_token: Vec<String> = id_to_token.into_iter().map(|(_, t)| t).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let merge_rank = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(SubwordVocab {
            merges,
            merge_rank,
            token_to_id,
            id_to_token,
            language_tokens,
        })
    }
}

/// Trains a byte-pair vocabulary: base symbols are the corpus characters
/// plus the end-of-word marker; `reserved` tokens (language tags) are
/// added whole and never split. Pair-count ties break lexicographically.
pub fn train_bpe(
    corpus: &[Vec<String>],
    merge_ops: usize,
    reserved: &[String],
) -> Result<SubwordVocab> {
    if corpus.is_empty() {
        return Err(Error::invalid_argument("empty corpus for subword training"));
    }

    // word frequencies over the whole corpus
    let mut word_freq: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus {
        for word in sentence {
            *word_freq.entry(word.as_str()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = {
        let mut sorted: Vec<(&str, u64)> = word_freq.into_iter().collect();
        sorted.sort_unstable();
        sorted
            .into_iter()
            .map(|(w, f)| {
                let mut syms: Vec<String> = w.chars().map(String::from).collect();
                syms.push(END_OF_WORD.to_string());
                (syms, f)
            })
            .collect()
    };

    let base_symbols: BTreeSet<String> = words
        .iter()
        .flat_map(|(syms, _)| syms.iter().cloned())
        .collect();

    let mut merges: Vec<(String, String)> = Vec::with_capacity(merge_ops);
    for _ in 0..merge_ops {
        let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
        for (syms, freq) in &words {
            for window in syms.windows(2) {
                *pair_counts
                    .entry((window[0].clone(), window[1].clone()))
                    .or_insert(0) += freq;
            }
        }
        // highest count, ties by lexicographically smallest pair
        let Some(best) = pair_counts
            .into_iter()
            .min_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)))
            .map(|(p, _)| p)
        else {
            break;
        };
        for (syms, _) in &mut words {
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == best.0 && syms[i + 1] == best.1 {
                    merged.push(format!("{}{}", best.0, best.1));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = merged;
        }
        merges.push(best);
    }

    // id order: specials, reserved, base symbols, merge products
    let mut id_to_token: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let mut add = |tok: String, out: &mut Vec<String>, seen: &mut HashSet<String>| {
        if seen.insert(tok.clone()) {
            out.push(tok);
        }
    };
    for sp in [PAD, BOS, EOS, UNK] {
        add(sp.to_string(), &mut id_to_token, &mut seen);
    }
    let mut language_tokens = BTreeSet::new();
    for r in reserved {
        language_tokens.insert(r.clone());
        add(r.clone(), &mut id_to_token, &mut seen);
    }
    for s in &base_symbols {
        add(s.clone(), &mut id_to_token, &mut seen);
    }
    for (a, b) in &merges {
        add(format!("{a}{b}"), &mut id_to_token, &mut seen);
    }

    let token_to_id = id_to_token
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    let merge_rank = merges
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();
    Ok(SubwordVocab {
        merges,
        merge_rank,
        token_to_id,
        id_to_token,
        language_tokens,
    })
}

/// Builds a finetuning embedding matrix from a pretrained one: rows of
/// shared tokens are copied bit-exactly, rows of new tokens are drawn from
/// a zero-mean normal with std `hidden^-0.5`.
pub fn rebind_embeddings(
    pt_vocab: &SubwordVocab,
    ft_vocab: &SubwordVocab,
    pt_embeddings: &Tensor,
    seed: u64,
) -> Result<Tensor> {
    let (rows, hidden) = pt_embeddings.rows_cols();
    if rows != pt_vocab.size() {
        return Err(Error::invalid_argument(format!(
            "embedding has {rows} rows but pretraining vocabulary has {}",
            pt_vocab.size()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let std = (hidden as f32).powf(-0.5);
    let mut out = Vec::with_capacity(ft_vocab.size() * hidden);
    for tok in ft_vocab.tokens() {
        match pt_vocab.id(tok) {
            Some(pt_id) => {
                let start = pt_id as usize * hidden;
                out.extend_from_slice(&pt_embeddings.data()[start..start + hidden]);
            }
            None => {
                let fresh = Tensor::randn(&[hidden], 0.0, std, &mut rng);
                out.extend_from_slice(fresh.data());
            }
        }
    }
    Tensor::new(vec![ft_vocab.size(), hidden], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toycorpus::{generate_language, generate_monolingual};

    fn toy_corpus() -> Vec<Vec<String>> {
        let lang = generate_language(7, "E", 200).unwrap();
        generate_monolingual(&lang, 120, 5).unwrap()
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(train_bpe(&[], 10, &[]).is_err());
    }

    #[test]
    fn zero_merges_gives_character_vocab() {
        let corpus = vec![vec!["abc".to_string(), "ab".to_string()]];
        let vocab = train_bpe(&corpus, 0, &[]).unwrap();
        assert!(vocab.merges().is_empty());
        let ids = vocab.encode(&["abc".to_string()], None).unwrap();
        // a b c </w>
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn first_merge_on_repeated_as_is_aa() {
        // "aaab aaab": pair (a,a) occurs twice per word occurrence, beating
        // (a,b) and (b,</w>).
        let corpus = vec![vec!["aaab".to_string(), "aaab".to_string()]];
        let vocab = train_bpe(&corpus, 1, &[]).unwrap();
        assert_eq!(
            vocab.merges(),
            &[("a".to_string(), "a".to_string())],
            "expected (a,a) as the first merge"
        );
    }

    #[test]
    fn retraining_is_deterministic() {
        let corpus = toy_corpus();
        let a = train_bpe(&corpus, 150, &["<E>".to_string()]).unwrap();
        let b = train_bpe(&corpus, 150, &["<E>".to_string()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vocab_size_formula_holds() {
        let corpus = toy_corpus();
        let reserved = vec!["<E>".to_string(), "<L1>".to_string()];
        let merges = 100;
        let vocab = train_bpe(&corpus, merges, &reserved).unwrap();
        let base: std::collections::BTreeSet<char> =
            corpus.iter().flatten().flat_map(|w| w.chars()).collect();
        // specials + reserved + chars + end-of-word + merges
        assert_eq!(vocab.size(), 4 + reserved.len() + base.len() + 1 + merges);
    }

    #[test]
    fn encode_decode_round_trip() {
        let corpus = toy_corpus();
        let vocab = train_bpe(&corpus, 200, &["<E>".to_string()]).unwrap();
        for sentence in corpus.iter().take(40) {
            let ids = vocab.encode(sentence, Some("<E>")).unwrap();
            assert_eq!(ids[0], vocab.id("<E>").unwrap(), "language token first");
            let back = vocab.decode(&ids).unwrap();
            assert_eq!(&back, sentence);
        }
    }

    #[test]
    fn unknown_language_token_is_rejected() {
        let corpus = toy_corpus();
        let vocab = train_bpe(&corpus, 50, &["<E>".to_string()]).unwrap();
        assert!(vocab.encode(&["x".to_string()], Some("<L9>")).is_err());
    }

    #[test]
    fn unseen_character_maps_to_unk() {
        let corpus = vec![vec!["abc".to_string()]];
        let vocab = train_bpe(&corpus, 0, &[]).unwrap();
        let ids = vocab.encode(&["aqc".to_string()], None).unwrap();
        assert!(ids.contains(&vocab.unk_id()));
    }

    #[test]
    fn vocab_file_round_trips() {
        let corpus = toy_corpus();
        let vocab = train_bpe(&corpus, 80, &["<E>".to_string(), "<L1>".to_string()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let back = SubwordVocab::load(&path).unwrap();
        assert_eq!(vocab, back);
    }

    #[test]
    fn rebind_identity_copies_everything() {
        let corpus = toy_corpus();
        let vocab = train_bpe(&corpus, 50, &["<E>".to_string()]).unwrap();
        let emb = Tensor::randn(
            &[vocab.size(), 16],
            0.0,
            0.1,
            &mut ChaCha20Rng::seed_from_u64(3),
        );
        let out = rebind_embeddings(&vocab, &vocab, &emb, 99).unwrap();
        assert_eq!(out, emb);
    }

    #[test]
    fn rebind_copies_shared_and_samples_new() {
        let corpus_a = vec![vec!["abc".to_string(), "ab".to_string()]];
        let corpus_b = vec![vec!["abd".to_string(), "dd".to_string()]];
        let pt = train_bpe(&corpus_a, 2, &[]).unwrap();
        let ft = train_bpe(&corpus_b, 2, &[]).unwrap();
        let emb = Tensor::randn(&[pt.size(), 8], 0.0, 0.1, &mut ChaCha20Rng::seed_from_u64(4));
        let out = rebind_embeddings(&pt, &ft, &emb, 7).unwrap();
        assert_eq!(out.rows_cols(), (ft.size(), 8));
        for (ft_id, tok) in ft.tokens().enumerate() {
            if let Some(pt_id) = pt.id(tok) {
                let a = &out.data()[ft_id * 8..(ft_id + 1) * 8];
                let b = &emb.data()[pt_id as usize * 8..(pt_id as usize + 1) * 8];
                assert_eq!(a, b, "shared token {tok} not copied bit-exactly");
            }
        }
    }

    #[test]
    fn rebind_disjoint_rows_are_fresh() {
        let pt = train_bpe(&[vec!["aaa".to_string()]], 0, &[]).unwrap();
        let ft = train_bpe(&[vec!["zzz".to_string()]], 0, &[]).unwrap();
        let emb = Tensor::randn(&[pt.size(), 8], 0.0, 0.1, &mut ChaCha20Rng::seed_from_u64(5));
        let out = rebind_embeddings(&pt, &ft, &emb, 11).unwrap();
        // specials are shared; the character rows must all be fresh
        let z_id = ft.id("z").unwrap() as usize;
        let fresh = &out.data()[z_id * 8..(z_id + 1) * 8];
        for row in 0..pt.size() {
            assert_ne!(&emb.data()[row * 8..(row + 1) * 8], fresh);
        }
    }

    #[test]
    fn rebind_rejects_row_mismatch() {
        let pt = train_bpe(&[vec!["abc".to_string()]], 0, &[]).unwrap();
        let emb = Tensor::zeros(&[pt.size() + 1, 8]);
        assert!(rebind_embeddings(&pt, &pt, &emb, 0).is_err());
    }
}
