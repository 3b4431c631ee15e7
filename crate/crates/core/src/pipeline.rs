//! Glue between corpus records and model ids: codec learning, source layouts,
//! and training-example preparation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    align_summary, anonymize, compose_control_prefix, make_remainder_examples, select_training_entities, ArticleRecord,
    ControlSpec, EntityPolicy, LengthBinning,
};
use crate::error::{Error, Result};
use crate::tokenization::{BpeModel, ReservedLayout, Segmenter, TextCodec, Vocabulary, READ_BOUNDARY_ID};
use crate::training::Example;

/// What the encoder sees of an article.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLayout {
    Full,
    /// Only the sentences after the remainder boundary.
    RemainderOnly,
    /// Read sentences, `@readBoundary`, then the remainder.
    ReadAndRemainder,
}

impl std::str::FromStr for SourceLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SourceLayout::Full),
            "remainder_only" => Ok(SourceLayout::RemainderOnly),
            "read_and_remainder" => Ok(SourceLayout::ReadAndRemainder),
            _ => Err(Error::Config(format!("unknown source layout {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodecOptions {
    pub use_bpe: bool,
    pub bpe_merges: usize,
    /// Tokens must occur more than this many times to get their own id.
    pub min_count: u64,
    pub layout: ReservedLayout,
}

impl Default for CodecOptions {
    fn default() -> Self {
        CodecOptions {
            use_bpe: true,
            bpe_merges: 30_000,
            min_count: 0,
            layout: ReservedLayout::default(),
        }
    }
}

/// The record with its entity mentions replaced by entity tokens.
pub fn anonymized(record: &ArticleRecord) -> ArticleRecord {
    if record.entity_mentions.is_empty() {
        return record.clone();
    }
    let a = anonymize(
        &record.article_sentences,
        &record.summary_sentences,
        &record.entity_mentions,
    );
    ArticleRecord {
        article_sentences: a.article,
        summary_sentences: a.summary,
        ..record.clone()
    }
}

fn word_counts(records: &[ArticleRecord]) -> BTreeMap<&str, u64> {
    let mut counts = BTreeMap::new();
    for r in records {
        for w in r.article_sentences.iter().chain(&r.summary_sentences).flatten() {
            *counts.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Learns subword merges (or keeps whole words) and the vocabulary from
/// already anonymized records.
pub fn learn_codec(records: &[ArticleRecord], opts: &CodecOptions) -> TextCodec {
    let words = word_counts(records);
    let segmenter = if opts.use_bpe {
        Segmenter::Bpe(BpeModel::learn(words.iter().map(|(w, &c)| (*w, c)), opts.bpe_merges))
    } else {
        Segmenter::Word
    };
    let vocab = match &segmenter {
        Segmenter::Bpe(bpe) => {
            let mut sub: HashMap<String, u64> = HashMap::new();
            for (w, &c) in &words {
                for s in bpe.apply(w) {
                    *sub.entry(s).or_insert(0) += c;
                }
            }
            Vocabulary::from_counts(opts.layout, sub.iter().map(|(k, &v)| (k.as_str(), v)), opts.min_count)
        }
        Segmenter::Word => Vocabulary::from_counts(opts.layout, words.iter().map(|(w, &c)| (*w, c)), opts.min_count),
    };
    TextCodec::new(segmenter, vocab)
}

fn encode_flat(codec: &TextCodec, sentences: &[Vec<String>]) -> Vec<usize> {
    sentences.iter().flat_map(|s| codec.encode_words(s)).collect()
}

/// Encoder input: control prefix followed by at most `limit` article ids.
/// The prefix does not count against the limit. For the read-and-remainder
/// layout the remainder is kept whole where possible and the rest of the budget
/// goes to the end of the read part.
pub fn build_source(
    codec: &TextCodec,
    prefix: &[usize],
    article: &[Vec<String>],
    layout: SourceLayout,
    boundary: Option<usize>,
    limit: usize,
) -> Result<Vec<usize>> {
    if limit == 0 {
        return Err(Error::Config("article limit must be positive".into()));
    }
    let split = |b: Option<usize>| -> Result<usize> {
        let b = b.ok_or_else(|| Error::Contract("remainder layouts need a boundary".into()))?;
        Ok(b.min(article.len()))
    };
    let mut src = prefix.to_vec();
    match layout {
        SourceLayout::Full => {
            let ids = encode_flat(codec, article);
            src.extend_from_slice(&ids[..ids.len().min(limit)]);
        }
        SourceLayout::RemainderOnly => {
            let ids = encode_flat(codec, &article[split(boundary)?..]);
            src.extend_from_slice(&ids[..ids.len().min(limit)]);
        }
        SourceLayout::ReadAndRemainder => {
            let b = split(boundary)?;
            let rest = encode_flat(codec, &article[b..]);
            let rest = &rest[..rest.len().min(limit)];
            let read = encode_flat(codec, &article[..b]);
            let room = (limit - rest.len()).min(read.len());
            src.extend_from_slice(&read[read.len() - room..]);
            src.push(READ_BOUNDARY_ID);
            src.extend_from_slice(rest);
        }
    }
    Ok(src)
}

pub fn build_target(codec: &TextCodec, summary: &[Vec<String>]) -> Vec<usize> {
    encode_flat(codec, summary)
}

/// Splits a decoded word stream into sentences after `.`, `!` and `?`.
pub fn split_sentences(words: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for w in words {
        cur.push(w.clone());
        if matches!(w.as_str(), "." | "!" | "?") {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Which control markers training examples carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepOptions {
    pub length_control: bool,
    pub entity_policy: Option<EntityPolicy>,
    pub source_control: bool,
    pub layout: SourceLayout,
    pub article_limit: usize,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            length_control: false,
            entity_policy: None,
            source_control: false,
            layout: SourceLayout::Full,
            article_limit: crate::corpus::DEFAULT_ARTICLE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedExample {
    pub id: String,
    pub control: ControlSpec,
    pub example: Example,
}

/// One (boundary, reference) target derived from a record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryUnit {
    pub id: String,
    pub boundary: Option<usize>,
    pub summary: Vec<Vec<String>>,
}

/// The whole summary for the full layout; one unit per alignment-derived
/// boundary, holding the remainder summary, otherwise.
pub fn summary_units(record: &ArticleRecord, layout: SourceLayout) -> Vec<SummaryUnit> {
    match layout {
        SourceLayout::Full => vec![SummaryUnit {
            id: record.id.clone(),
            boundary: None,
            summary: record.summary_sentences.clone(),
        }],
        _ => {
            let alignment = align_summary(&record.article_sentences, &record.summary_sentences);
            make_remainder_examples(record, &alignment)
                .into_iter()
                .map(|ex| SummaryUnit {
                    id: ex.id,
                    boundary: Some(ex.boundary),
                    summary: ex.remainder_summary_sentences,
                })
                .collect()
        }
    }
}

/// Word lengths of every training target, for fitting the length bins.
pub fn target_lengths(records: &[ArticleRecord], layout: SourceLayout) -> Vec<usize> {
    records
        .iter()
        .flat_map(|r| summary_units(r, layout))
        .map(|u| u.summary.iter().map(Vec::len).sum())
        .collect()
}

/// Encoded training examples for anonymized records, in record order. Remainder
/// layouts emit one example per alignment-derived boundary. `baselines` maps record
/// ids to baseline decodes for the reference-minus-baseline entity policy.
pub fn prepare_examples<R: Rng + ?Sized>(
    records: &[ArticleRecord],
    codec: &TextCodec,
    binning: Option<&LengthBinning>,
    opts: &PrepOptions,
    baselines: Option<&BTreeMap<String, Vec<String>>>,
    rng: &mut R,
) -> Result<Vec<PreparedExample>> {
    if opts.length_control && binning.is_none() {
        return Err(Error::Config("length control needs a binning".into()));
    }
    let mut out = Vec::new();
    for record in records {
        for unit in summary_units(record, opts.layout) {
            let mut control = ControlSpec {
                remainder_boundary: unit.boundary,
                ..ControlSpec::default()
            };
            if let Some(b) = binning.filter(|_| opts.length_control) {
                control.length_bin = Some(b.assign(unit.summary.iter().map(Vec::len).sum()));
            }
            if let Some(policy) = opts.entity_policy {
                let view = ArticleRecord {
                    summary_sentences: unit.summary.clone(),
                    ..record.clone()
                };
                let baseline = baselines.and_then(|m| m.get(&record.id)).map(Vec::as_slice);
                control.entities = select_training_entities(&view, policy, baseline, rng)?;
            }
            if opts.source_control {
                control.source_style = Some(record.source_label);
            }
            let prefix = compose_control_prefix(&control, &codec.vocab)?;
            let source = build_source(
                codec,
                &prefix,
                &record.article_sentences,
                opts.layout,
                unit.boundary,
                opts.article_limit,
            )?;
            let target = build_target(codec, &unit.summary);
            if target.is_empty() {
                continue;
            }
            out.push(PreparedExample {
                id: unit.id,
                control,
                example: Example::new(source, target),
            });
        }
    }
    Ok(out)
}

const EXAMPLES_MAGIC: &[u8; 20] = b"ctrlsum-examples v1\n";

/// Binary example file: magic line, u32 count, then per example u32 source and
/// target lengths followed by their u32 ids, all little-endian.
pub fn write_examples<W: Write>(out: W, examples: &[Example]) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(EXAMPLES_MAGIC)?;
    let put = |out: &mut BufWriter<W>, v: usize| -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Contract(format!("{v} does not fit in u32")))?;
        out.write_all(&v.to_le_bytes())?;
        Ok(())
    };
    put(&mut out, examples.len())?;
    for ex in examples {
        put(&mut out, ex.source.len())?;
        put(&mut out, ex.target.len())?;
        for &id in ex.source.iter().chain(&ex.target) {
            put(&mut out, id)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_examples<R: Read>(mut input: R) -> Result<Vec<Example>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let body = bytes
        .strip_prefix(&EXAMPLES_MAGIC[..])
        .ok_or_else(|| Error::Contract("not an example file".into()))?;
    let mut words = body.chunks(4);
    let mut next = || -> Result<usize> {
        match words.next() {
            Some(w) if w.len() == 4 => Ok(u32::from_le_bytes([w[0], w[1], w[2], w[3]]) as usize),
            _ => Err(Error::Contract("truncated example file".into())),
        }
    };
    let n = next()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (s, t) = (next()?, next()?);
        let source = (0..s).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let target = (0..t).map(|_| next()).collect::<Result<Vec<_>>>()?;
        out.push(Example::new(source, target));
    }
    if next().is_ok() {
        return Err(Error::Contract("trailing bytes in example file".into()));
    }
    Ok(out)
}

pub fn save_examples(path: &Path, examples: &[Example]) -> Result<()> {
    write_examples(fs::File::create(path)?, examples)
}

pub fn load_examples(path: &Path) -> Result<Vec<Example>> {
    read_examples(fs::File::open(path)?)
}
