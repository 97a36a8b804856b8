//! Append-only pipeline manifest and corpus file formats.
//!
//! Every corpus transformation leaves a record here, so downstream audits
//! (synthetic-data multipliers, filter accounting, ablation lineage) can
//! reconcile counts exactly. Parallel corpora are written as two aligned
//! one-sentence-per-line files plus a JSON-lines manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toycorpus::{Lang, Origin, SentencePair};

/// One manifest line: identity and provenance of a pair, or a note about
/// a dropped/transformed item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub src_lang: Lang,
    pub tgt_lang: Lang,
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub teacher_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub round: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl ManifestRecord {
    pub fn from_pair(pair: &SentencePair) -> Self {
        ManifestRecord {
            id: pair.id.clone(),
            src_lang: pair.src_lang.clone(),
            tgt_lang: pair.tgt_lang.clone(),
            origin: pair.origin,
            teacher_id: pair.teacher_id.clone(),
            round: pair.round,
            note: None,
        }
    }
}

/// Append-only record of corpus transformations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PipelineManifest {
    records: Vec<ManifestRecord>,
}

impl PipelineManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: ManifestRecord) {
        self.records.push(record);
    }

    pub fn extend_from_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = &'a SentencePair>) {
        for p in pairs {
            self.push(ManifestRecord::from_pair(p));
        }
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record counts grouped by teacher id; pairs without one group under
    /// the empty string.
    pub fn counts_by_teacher(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.teacher_id.clone().unwrap_or_default())
                .or_insert(0) += 1;
        }
        out
    }

    pub fn counts_by_origin(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            let key = serde_json::to_value(r.origin)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for r in &self.records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        let mut records = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(PipelineManifest { records })
    }
}

/// Writes a parallel corpus as `<stem>.src` / `<stem>.tgt` (one sentence
/// per line, space-joined tokens) plus `<stem>.manifest.jsonl`.
pub fn write_parallel(dir: &Path, stem: &str, pairs: &[SentencePair]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut src = fs::File::create(dir.join(format!("{stem}.src")))?;
    let mut tgt = fs::File::create(dir.join(format!("{stem}.tgt")))?;
    let mut manifest = PipelineManifest::new();
    for p in pairs {
        writeln!(src, "{}", p.src.join(" "))?;
        writeln!(tgt, "{}", p.tgt.join(" "))?;
        manifest.push(ManifestRecord::from_pair(p));
    }
    manifest.write_jsonl(&dir.join(format!("{stem}.manifest.jsonl")))?;
    Ok(())
}

/// Reads a corpus written by [`write_parallel`].
pub fn read_parallel(dir: &Path, stem: &str) -> Result<Vec<SentencePair>> {
    let src = read_lines(&dir.join(format!("{stem}.src")))?;
    let tgt = read_lines(&dir.join(format!("{stem}.tgt")))?;
    let manifest = PipelineManifest::read_jsonl(&dir.join(format!("{stem}.manifest.jsonl")))?;
    if src.len() != tgt.len() || src.len() != manifest.len() {
        return Err(Error::invalid_argument(format!(
            "misaligned corpus {stem}: {} src, {} tgt, {} manifest lines",
            src.len(),
            tgt.len(),
            manifest.len()
        )));
    }
    let mut pairs = Vec::with_capacity(src.len());
    for ((s, t), r) in src.into_iter().zip(tgt).zip(manifest.records.iter()) {
        pairs.push(SentencePair {
            id: r.id.clone(),
            src_lang: r.src_lang.clone(),
            tgt_lang: r.tgt_lang.clone(),
            src: split_tokens(&s),
            tgt: split_tokens(&t),
            origin: r.origin,
            teacher_id: r.teacher_id.clone(),
            round: r.round,
        });
    }
    Ok(pairs)
}

/// Writes a monolingual corpus, one sentence per line.
pub fn write_mono(path: &Path, sentences: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    for s in sentences {
        writeln!(f, "{}", s.join(" "))?;
    }
    Ok(())
}

pub fn read_mono(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?.iter().map(|l| split_tokens(l)).collect())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path)
        .map_err(|e| Error::not_found(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        out.push(line?);
    }
    Ok(out)
}

fn split_tokens(line: &str) -> Vec<String> {
    line.split_whitespace().map(String::from).collect()
}
