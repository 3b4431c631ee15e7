//! The pipeline stages behind each subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ctrlsum::corpus::{
    align_summary, compute_length_bins, deanonymize, entities_in, read_corpus, remainder_boundaries, remainder_summary,
    write_corpus, ArticleRecord, ControlSpec, EntityPolicy, LengthBinning,
};
use ctrlsum::decoding::{
    fixed_control_spec, DecodeConstraints, FixedControls, Lead3Entities, RemainderMethod, Summarizer, Summary,
};
use ctrlsum::evaluation::{
    corpus_eval, entity_occurrence_rate, format_curve, rouge_recall_truncated, EvalReport, RougeVariant,
};
use ctrlsum::model::{AttentionPattern, ConvSeq2Seq, ModelConfig, PositionSets};
use ctrlsum::pipeline::{
    anonymized, learn_codec, load_examples, prepare_examples, save_examples, summary_units, target_lengths,
    CodecOptions, PrepOptions, PreparedExample, SourceLayout,
};
use ctrlsum::tokenization::{BpeModel, ReservedLayout, Segmenter, TextCodec, Vocabulary};
use ctrlsum::training::{format_train_log, train, EpochLog, Example, TrainConfig, TrainReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::synth::{generate, SynthTask};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const MERGES_FILE: &str = "bpe.merges";
pub const BINS_FILE: &str = "bins.txt";
pub const META_FILE: &str = "prep.json";
pub const TRAIN_FILE: &str = "train.bin";
pub const DEV_FILE: &str = "dev.bin";
pub const CONFIG_FILE: &str = "config.txt";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

pub fn epoch_checkpoint(epoch: usize) -> String {
    format!("epoch{epoch}.ckpt")
}

fn log_config(command: &str, cfg: &RunConfig) {
    log::info!("{command} with resolved config:\n{}", cfg.render());
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<ArticleRecord>> {
    log_config("synth", cfg);
    let task: SynthTask = cfg.task.parse()?;
    let records = generate(task, cfg.size, cfg.seed)?;
    let out = cfg.require(&cfg.out, "out")?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    write_corpus(out, &records)?;
    log::info!("wrote {} {} records to {}", records.len(), cfg.task, out.display());
    Ok(records)
}

/// Settings recorded by preprocessing and needed again at decode time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepMeta {
    pub use_bpe: bool,
    pub prep: PrepOptions,
}

fn entity_policy(name: &str) -> Result<Option<EntityPolicy>> {
    Ok(match name {
        "none" => None,
        "reference_all" => Some(EntityPolicy::ReferenceAll),
        "reference_minus_baseline" => Some(EntityPolicy::ReferenceMinusBaseline),
        "lead3_random" => Some(EntityPolicy::Lead3Random),
        _ => bail!("unknown entity policy {name:?}"),
    })
}

fn write_controls(path: &Path, examples: &[PreparedExample]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for p in examples {
        serde_json::to_writer(&mut out, &serde_json::json!({"id": p.id, "control": p.control}))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Decoded words by record id, from a decode file.
fn baseline_words(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    Ok(read_decodes(path)?
        .into_iter()
        .map(|d| (d.id, d.text.split_whitespace().map(String::from).collect()))
        .collect())
}

pub struct Preprocessed {
    pub codec: TextCodec,
    pub binning: LengthBinning,
    pub train: Vec<PreparedExample>,
    pub dev: Vec<PreparedExample>,
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<Preprocessed> {
    log_config("preprocess", cfg);
    let out = cfg.require(&cfg.out, "out")?;
    fs::create_dir_all(out)?;
    let train_records: Vec<ArticleRecord> = read_corpus(cfg.require(&cfg.corpus, "corpus")?)?
        .iter()
        .map(anonymized)
        .collect();
    let dev_records: Vec<ArticleRecord> = match &cfg.dev_corpus {
        Some(p) => read_corpus(p)?.iter().map(anonymized).collect(),
        None => Vec::new(),
    };
    let layout: SourceLayout = cfg.layout.parse()?;
    let codec = learn_codec(
        &train_records,
        &CodecOptions {
            use_bpe: cfg.use_bpe,
            bpe_merges: cfg.bpe_merges,
            min_count: cfg.min_count,
            layout: ReservedLayout {
                num_entities: cfg.num_entities,
                num_sources: cfg.num_sources,
            },
        },
    );
    let binning = compute_length_bins(&target_lengths(&train_records, layout), cfg.num_bins)?;
    let prep = PrepOptions {
        length_control: cfg.length_control,
        entity_policy: entity_policy(&cfg.entity_policy)?,
        source_control: cfg.source_control,
        layout,
        article_limit: cfg.article_limit,
    };
    let baselines = match &cfg.baseline_decodes {
        Some(p) => Some(baseline_words(p)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = prepare_examples(
        &train_records,
        &codec,
        Some(&binning),
        &prep,
        baselines.as_ref(),
        &mut rng,
    )?;
    let dev = prepare_examples(
        &dev_records,
        &codec,
        Some(&binning),
        &prep,
        baselines.as_ref(),
        &mut rng,
    )?;
    if train.is_empty() {
        bail!("preprocessing produced no training examples");
    }

    codec.vocab.write(&out.join(VOCAB_FILE))?;
    if let Segmenter::Bpe(bpe) = &codec.segmenter {
        bpe.write(&out.join(MERGES_FILE))?;
    }
    binning.write(&out.join(BINS_FILE))?;
    let meta = PrepMeta {
        use_bpe: cfg.use_bpe,
        prep,
    };
    fs::write(out.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    let plain = |v: &[PreparedExample]| v.iter().map(|p| p.example.clone()).collect::<Vec<Example>>();
    save_examples(&out.join(TRAIN_FILE), &plain(&train))?;
    save_examples(&out.join(DEV_FILE), &plain(&dev))?;
    write_controls(&out.join("train.controls.jsonl"), &train)?;
    write_controls(&out.join("dev.controls.jsonl"), &dev)?;
    fs::write(out.join(CONFIG_FILE), cfg.render())?;
    log::info!(
        "{} train / {} dev examples, vocabulary {}, {} length bins",
        train.len(),
        dev.len(),
        codec.vocab.len(),
        binning.num_bins()
    );
    Ok(Preprocessed {
        codec,
        binning,
        train,
        dev,
    })
}

/// Codec, binning and preprocessing settings of a preprocessed directory.
pub struct DataDir {
    pub codec: TextCodec,
    pub binning: LengthBinning,
    pub meta: PrepMeta,
}

pub fn load_data_dir(dir: &Path) -> Result<DataDir> {
    let vocab = Vocabulary::read(&dir.join(VOCAB_FILE)).with_context(|| format!("vocabulary in {}", dir.display()))?;
    let meta: PrepMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
    let segmenter = if meta.use_bpe {
        Segmenter::Bpe(BpeModel::read(&dir.join(MERGES_FILE))?)
    } else {
        Segmenter::Word
    };
    Ok(DataDir {
        codec: TextCodec::new(segmenter, vocab),
        binning: LengthBinning::read(&dir.join(BINS_FILE))?,
        meta,
    })
}

pub fn model_config(cfg: &RunConfig, vocab_size: usize, layout: SourceLayout) -> Result<ModelConfig> {
    let mut m = match cfg.model.as_str() {
        "toy" => ModelConfig::toy(vocab_size),
        "duc" => ModelConfig::duc(vocab_size),
        "cnn_dailymail" => ModelConfig::cnn_dailymail(vocab_size),
        other => bail!("unknown model preset {other:?}"),
    };
    if let Some(v) = cfg.hidden_size {
        m.hidden_size = v;
    }
    if let Some(v) = cfg.embed_size {
        m.embed_size = v;
    }
    if let Some(v) = cfg.encoder_layers {
        m.encoder_layers = v;
    }
    if let Some(v) = cfg.decoder_layers {
        m.decoder_layers = v;
    }
    if let Some(v) = cfg.dropout {
        m.dropout_rate = v;
    }
    m.tie_embeddings = cfg.tie_embeddings;
    if !cfg.intra_attention {
        m.attention_pattern = AttentionPattern::SourceOnly;
    }
    if layout == SourceLayout::ReadAndRemainder {
        m.position_sets = PositionSets::ReadRemainder;
    }
    m.validate()?;
    Ok(m)
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        lr: cfg.lr,
        momentum: cfg.momentum,
        clip_norm: cfg.clip_norm,
        min_lr: cfg.min_lr,
        max_epochs: cfg.max_epochs,
        batch_tokens: cfg.batch_tokens,
        lr_patience: cfg.lr_patience,
        seed: cfg.seed,
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    log_config("train", cfg);
    let data_dir = cfg.require(&cfg.data_dir, "data_dir")?;
    let out = cfg.require(&cfg.out, "out")?.to_path_buf();
    fs::create_dir_all(&out)?;
    let data = load_data_dir(data_dir)?;
    let train_set = load_examples(&data_dir.join(TRAIN_FILE))?;
    let dev_set = load_examples(&data_dir.join(DEV_FILE))?;
    let mconf = model_config(cfg, data.codec.vocab.len(), data.meta.prep.layout)?;
    let mut model = ConvSeq2Seq::new(mconf, cfg.seed)?;
    log::info!("model with {} parameters", model.num_parameters());
    fs::write(out.join(CONFIG_FILE), cfg.render())?;
    let mut best = f64::INFINITY;
    let mut logs: Vec<EpochLog> = Vec::new();
    let report = train(&mut model, &train_set, &dev_set, &train_config(cfg), |entry, m| {
        logs.push(entry.clone());
        fs::write(out.join(TRAIN_LOG_FILE), format_train_log(&logs))?;
        m.save(&out.join(LAST_CHECKPOINT))?;
        if cfg.save_every_epoch {
            m.save(&out.join(epoch_checkpoint(entry.epoch)))?;
        }
        if entry.val_ppl < best {
            best = entry.val_ppl;
            m.save(&out.join(BEST_CHECKPOINT))?;
        }
        Ok(())
    })?;
    Ok(report)
}

/// One line of a decode file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub control: ControlSpec,
    pub ids: Vec<usize>,
    /// Detokenized words, entity tokens kept, separated by spaces.
    pub text: String,
    /// `text` with entity tokens replaced by their surface mentions.
    pub surface: String,
    pub score: f64,
    pub fallback: bool,
    pub empty_remainder: bool,
}

pub fn read_decodes(path: &Path) -> Result<Vec<DecodeRecord>> {
    let reader = BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_decodes(path: &Path, decodes: &[DecodeRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for d in decodes {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn lead3_mode(name: &str) -> Result<Lead3Entities> {
    Ok(match name {
        "none" => Lead3Entities::None,
        "random" => Lead3Entities::Random,
        "all" => Lead3Entities::All,
        _ => bail!("unknown lead3 mode {name:?}"),
    })
}

/// One article to decode, with the reference it will be scored against.
struct Job {
    id: String,
    record: usize,
    control: ControlSpec,
}

fn reference_control(
    meta: &PrepMeta,
    binning: &LengthBinning,
    record: &ArticleRecord,
    summary: &[Vec<String>],
) -> ControlSpec {
    ControlSpec {
        length_bin: meta
            .prep
            .length_control
            .then(|| binning.assign(summary.iter().map(Vec::len).sum())),
        entities: if meta.prep.entity_policy.is_some() {
            entities_in(summary.iter().flatten())
        } else {
            Vec::new()
        },
        source_style: meta.prep.source_control.then_some(record.source_label),
        remainder_boundary: None,
    }
}

/// Decodes every article of `corpus` with a loaded model.
pub fn summarize_records(
    cfg: &RunConfig,
    model: &ConvSeq2Seq,
    data: &DataDir,
    records: &[ArticleRecord],
) -> Result<Vec<DecodeRecord>> {
    let method: RemainderMethod = cfg.remainder_method.parse()?;
    let fixed = FixedControls {
        length_bin: cfg.length_bin,
        source_style: cfg.style,
        entities: lead3_mode(&cfg.lead3)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jobs = Vec::new();
    for (ri, r) in records.iter().enumerate() {
        let units: Vec<(String, Option<usize>, Vec<Vec<String>>)> = if cfg.expand_remainder {
            summary_units(r, SourceLayout::RemainderOnly)
                .into_iter()
                .map(|u| (u.id, u.boundary, u.summary))
                .collect()
        } else {
            let summary = match cfg.boundary {
                Some(b) => {
                    let alignment = align_summary(&r.article_sentences, &r.summary_sentences);
                    remainder_summary(&r.summary_sentences, &alignment, b)
                }
                None => r.summary_sentences.clone(),
            };
            vec![(r.id.clone(), cfg.boundary, summary)]
        };
        for (id, boundary, summary) in units {
            let mut control = match cfg.control.as_str() {
                "flags" => ControlSpec {
                    length_bin: cfg.length_bin,
                    entities: cfg.entities.clone(),
                    source_style: cfg.style,
                    remainder_boundary: None,
                },
                "reference" => reference_control(&data.meta, &data.binning, r, &summary),
                "fixed" => fixed_control_spec(&r.article_sentences, &fixed, &mut rng),
                other => bail!("unknown control mode {other:?}"),
            };
            control.remainder_boundary = boundary;
            jobs.push(Job {
                id,
                record: ri,
                control,
            });
        }
    }
    let mut summarizer = Summarizer::new(model, &data.codec);
    summarizer.constraints = DecodeConstraints {
        beam_size: cfg.beam,
        min_len: cfg.min_len,
        max_len: cfg.max_len,
        block_trigrams: cfg.trigram_block,
    };
    summarizer.constraints.validate()?;
    summarizer.article_limit = cfg.article_limit;
    let results: Vec<ctrlsum::Result<Summary>> = jobs
        .par_iter()
        .map(|job| {
            let article = &records[job.record].article_sentences;
            match job.control.remainder_boundary {
                Some(b) => summarizer.remainder(article, b, method, &job.control),
                None => summarizer.summarize(article, &job.control, SourceLayout::Full),
            }
        })
        .collect();
    let mut out = Vec::with_capacity(jobs.len());
    for (job, res) in jobs.into_iter().zip(results) {
        let s = res.with_context(|| format!("decoding {}", job.id))?;
        let r = &records[job.record];
        let inverse: BTreeMap<String, String> = r.entity_mentions.iter().map(|(m, t)| (t.clone(), m.clone())).collect();
        out.push(DecodeRecord {
            id: job.id,
            control: job.control,
            text: s.words.join(" "),
            surface: deanonymize(&s.words, &inverse).join(" "),
            ids: s.ids,
            score: s.score,
            fallback: s.fallback,
            empty_remainder: s.empty_remainder,
        });
    }
    Ok(out)
}

pub fn cmd_summarize(cfg: &RunConfig) -> Result<Vec<DecodeRecord>> {
    log_config("summarize", cfg);
    let data = load_data_dir(cfg.require(&cfg.data_dir, "data_dir")?)?;
    let ckpt = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let model = ConvSeq2Seq::load(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    if model.config().vocab_size != data.codec.vocab.len() {
        bail!(
            "checkpoint vocabulary {} does not match data directory vocabulary {}",
            model.config().vocab_size,
            data.codec.vocab.len()
        );
    }
    let records: Vec<ArticleRecord> = read_corpus(cfg.require(&cfg.corpus, "corpus")?)?
        .iter()
        .map(anonymized)
        .collect();
    let decodes = summarize_records(cfg, &model, &data, &records)?;
    write_decodes(cfg.require(&cfg.out, "out")?, &decodes)?;
    Ok(decodes)
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

/// Reference for a decode: the record's summary, or its remainder summary when
/// the decode had a boundary.
pub fn reference_for(record: &ArticleRecord, control: &ControlSpec) -> Vec<Vec<String>> {
    match control.remainder_boundary {
        Some(b) => {
            let alignment = align_summary(&record.article_sentences, &record.summary_sentences);
            remainder_summary(&record.summary_sentences, &alignment, b)
        }
        None => record.summary_sentences.clone(),
    }
}

/// Mean decoded length per requested length bin, over decodes carrying one.
pub fn length_curve(decodes: &[DecodeRecord], num_bins: usize) -> Vec<f64> {
    let mut sum = vec![0usize; num_bins];
    let mut count = vec![0usize; num_bins];
    for d in decodes {
        if let Some(b) = d.control.length_bin.filter(|&b| b < num_bins) {
            sum[b] += words(&d.text).len();
            count[b] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { f64::NAN } else { s as f64 / c as f64 })
        .collect()
}

pub fn evaluate_decodes(cfg: &RunConfig, decodes: &[DecodeRecord], records: &[ArticleRecord]) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &ArticleRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut cands = Vec::with_capacity(decodes.len());
    let mut refs = Vec::with_capacity(decodes.len());
    for d in decodes {
        let base = d.id.split('#').next().unwrap_or(&d.id);
        let r = by_id
            .get(base)
            .ok_or_else(|| anyhow!("decode {} has no reference record", d.id))?;
        cands.push(words(&d.text));
        refs.push(reference_for(r, &d.control).concat());
    }
    let mut report = EvalReport::default();
    report.add_corpus("", &corpus_eval(&cands, &refs)?);
    let n = decodes.len();
    let mean_len = cands.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
    report.push("mean_length", mean_len, n);
    report.push(
        "fallback_rate",
        decodes.iter().filter(|d| d.fallback).count() as f64 / n as f64,
        n,
    );
    report.push(
        "empty_rate",
        decodes.iter().filter(|d| d.empty_remainder).count() as f64 / n as f64,
        n,
    );
    let requested: Vec<(&[String], &str)> = cands
        .iter()
        .zip(decodes)
        .filter_map(|(c, d)| d.control.entities.first().map(|e| (c.as_slice(), e.as_str())))
        .collect();
    if !requested.is_empty() {
        let count = requested.len();
        report.push("entity_rate", entity_occurrence_rate(requested)?, count);
    }
    for &limit in &cfg.byte_limits {
        for (name, variant) in [
            ("rouge1", RougeVariant::N(1)),
            ("rouge2", RougeVariant::N(2)),
            ("rougeL", RougeVariant::L),
        ] {
            let total: f64 = cands
                .iter()
                .zip(&refs)
                .map(|(c, r)| rouge_recall_truncated(&c.join(" "), &r.join(" "), limit, variant))
                .sum();
            report.push(format!("{name}_recall@{limit}b"), total / n as f64, n);
        }
    }
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    log_config("evaluate", cfg);
    let decodes = read_decodes(cfg.require(&cfg.decodes, "decodes")?)?;
    let records: Vec<ArticleRecord> = read_corpus(cfg.require(&cfg.corpus, "corpus")?)?
        .iter()
        .map(anonymized)
        .collect();
    let report = evaluate_decodes(cfg, &decodes, &records)?;
    match &cfg.out {
        Some(p) => fs::write(p, report.to_tsv())?,
        None => print!("{}", report.to_tsv()),
    }
    if let Some(p) = &cfg.curve {
        fs::write(p, format_curve(&length_curve(&decodes, cfg.num_bins)))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    pub alignment: Vec<usize>,
    pub boundaries: Vec<usize>,
}

pub fn cmd_align(cfg: &RunConfig) -> Result<Vec<AlignmentRecord>> {
    log_config("align", cfg);
    let records = read_corpus(cfg.require(&cfg.corpus, "corpus")?)?;
    let aligned: Vec<AlignmentRecord> = records
        .iter()
        .map(anonymized)
        .map(|r| {
            let alignment = align_summary(&r.article_sentences, &r.summary_sentences);
            let boundaries = remainder_boundaries(&alignment)
                .into_iter()
                .filter(|&b| b > 0 && b < r.article_sentences.len())
                .collect();
            AlignmentRecord {
                id: r.id.clone(),
                alignment,
                boundaries,
            }
        })
        .collect();
    let mut out: Box<dyn Write> = match &cfg.out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for a in &aligned {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(aligned)
}
