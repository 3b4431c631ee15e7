//! Flat `key = value` run configuration shared by every command.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

/// Every setting a command may read. Files and flags may only name these keys.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    // synth
    pub task: String,
    pub size: usize,
    // inputs and outputs
    pub corpus: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub decodes: Option<PathBuf>,
    pub baseline_decodes: Option<PathBuf>,
    // preprocessing
    pub use_bpe: bool,
    pub bpe_merges: usize,
    pub min_count: u64,
    pub num_entities: usize,
    pub num_sources: usize,
    pub num_bins: usize,
    pub article_limit: usize,
    pub length_control: bool,
    pub entity_policy: String,
    pub source_control: bool,
    pub layout: String,
    // model and training
    pub model: String,
    pub hidden_size: Option<usize>,
    pub embed_size: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub dropout: Option<f64>,
    pub tie_embeddings: bool,
    pub intra_attention: bool,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub min_lr: f64,
    pub lr_patience: usize,
    pub max_epochs: usize,
    pub batch_tokens: usize,
    pub save_every_epoch: bool,
    // decoding
    pub beam: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub trigram_block: bool,
    pub control: String,
    pub length_bin: Option<usize>,
    pub entities: Vec<String>,
    pub style: Option<usize>,
    pub boundary: Option<usize>,
    pub lead3: String,
    pub remainder_method: String,
    pub expand_remainder: bool,
    // evaluation
    pub byte_limits: Vec<usize>,
    pub curve: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            task: "length_copy".into(),
            size: 1000,
            corpus: None,
            dev_corpus: None,
            data_dir: None,
            out: None,
            checkpoint: None,
            decodes: None,
            baseline_decodes: None,
            use_bpe: true,
            bpe_merges: 30_000,
            min_count: 0,
            num_entities: 64,
            num_sources: 2,
            num_bins: 10,
            article_limit: 400,
            length_control: true,
            entity_policy: "none".into(),
            source_control: false,
            layout: "full".into(),
            model: "toy".into(),
            hidden_size: None,
            embed_size: None,
            encoder_layers: None,
            decoder_layers: None,
            dropout: None,
            tie_embeddings: true,
            intra_attention: true,
            lr: 0.2,
            momentum: 0.99,
            clip_norm: 0.1,
            min_lr: 1e-5,
            lr_patience: 0,
            max_epochs: 100,
            batch_tokens: 4000,
            save_every_epoch: false,
            beam: 5,
            min_len: 0,
            max_len: 200,
            trigram_block: true,
            control: "flags".into(),
            length_bin: None,
            entities: Vec::new(),
            style: None,
            boundary: None,
            lead3: "none".into(),
            remainder_method: "full_summary".into(),
            expand_remainder: false,
            byte_limits: Vec::new(),
            curve: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("bad value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("bad value {value:?} for {key}: expected true or false"),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Applies one setting. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "task" => self.task = v.into(),
            "size" => self.size = parse(key, v)?,
            "corpus" => self.corpus = opt_path(v),
            "dev_corpus" => self.dev_corpus = opt_path(v),
            "data_dir" => self.data_dir = opt_path(v),
            "out" => self.out = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "decodes" => self.decodes = opt_path(v),
            "baseline_decodes" => self.baseline_decodes = opt_path(v),
            "use_bpe" => self.use_bpe = parse_bool(key, v)?,
            "bpe_merges" => self.bpe_merges = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "num_entities" => self.num_entities = parse(key, v)?,
            "num_sources" => self.num_sources = parse(key, v)?,
            "num_bins" => self.num_bins = parse(key, v)?,
            "article_limit" => self.article_limit = parse(key, v)?,
            "length_control" => self.length_control = parse_bool(key, v)?,
            "entity_policy" => self.entity_policy = v.into(),
            "source_control" => self.source_control = parse_bool(key, v)?,
            "layout" => self.layout = v.into(),
            "model" => self.model = v.into(),
            "hidden_size" => self.hidden_size = opt(key, v)?,
            "embed_size" => self.embed_size = opt(key, v)?,
            "encoder_layers" => self.encoder_layers = opt(key, v)?,
            "decoder_layers" => self.decoder_layers = opt(key, v)?,
            "dropout" => self.dropout = opt(key, v)?,
            "tie_embeddings" => self.tie_embeddings = parse_bool(key, v)?,
            "intra_attention" => self.intra_attention = parse_bool(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "min_lr" => self.min_lr = parse(key, v)?,
            "lr_patience" => self.lr_patience = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "batch_tokens" => self.batch_tokens = parse(key, v)?,
            "save_every_epoch" => self.save_every_epoch = parse_bool(key, v)?,
            "beam" => self.beam = parse(key, v)?,
            "min_len" => self.min_len = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "trigram_block" => self.trigram_block = parse_bool(key, v)?,
            "control" => self.control = v.into(),
            "length_bin" => self.length_bin = opt(key, v)?,
            "entities" => self.entities = list(key, v)?,
            "style" => self.style = opt(key, v)?,
            "boundary" => self.boundary = opt(key, v)?,
            "lead3" => self.lead3 = v.into(),
            "remainder_method" => self.remainder_method = v.into(),
            "expand_remainder" => self.expand_remainder = parse_bool(key, v)?,
            "byte_limits" => self.byte_limits = list(key, v)?,
            "curve" => self.curve = opt_path(v),
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// The resolved configuration in the file format, one key per line.
    pub fn render(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let o = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let join = |v: Vec<String>| v.join(",");
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("task", self.task.clone()),
            ("size", self.size.to_string()),
            ("corpus", path(&self.corpus)),
            ("dev_corpus", path(&self.dev_corpus)),
            ("data_dir", path(&self.data_dir)),
            ("out", path(&self.out)),
            ("checkpoint", path(&self.checkpoint)),
            ("decodes", path(&self.decodes)),
            ("baseline_decodes", path(&self.baseline_decodes)),
            ("use_bpe", self.use_bpe.to_string()),
            ("bpe_merges", self.bpe_merges.to_string()),
            ("min_count", self.min_count.to_string()),
            ("num_entities", self.num_entities.to_string()),
            ("num_sources", self.num_sources.to_string()),
            ("num_bins", self.num_bins.to_string()),
            ("article_limit", self.article_limit.to_string()),
            ("length_control", self.length_control.to_string()),
            ("entity_policy", self.entity_policy.clone()),
            ("source_control", self.source_control.to_string()),
            ("layout", self.layout.clone()),
            ("model", self.model.clone()),
            ("hidden_size", o(self.hidden_size.map(|v| v.to_string()))),
            ("embed_size", o(self.embed_size.map(|v| v.to_string()))),
            ("encoder_layers", o(self.encoder_layers.map(|v| v.to_string()))),
            ("decoder_layers", o(self.decoder_layers.map(|v| v.to_string()))),
            ("dropout", o(self.dropout.map(|v| v.to_string()))),
            ("tie_embeddings", self.tie_embeddings.to_string()),
            ("intra_attention", self.intra_attention.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("min_lr", self.min_lr.to_string()),
            ("lr_patience", self.lr_patience.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("batch_tokens", self.batch_tokens.to_string()),
            ("save_every_epoch", self.save_every_epoch.to_string()),
            ("beam", self.beam.to_string()),
            ("min_len", self.min_len.to_string()),
            ("max_len", self.max_len.to_string()),
            ("trigram_block", self.trigram_block.to_string()),
            ("control", self.control.clone()),
            ("length_bin", o(self.length_bin.map(|v| v.to_string()))),
            ("entities", self.entities.join(",")),
            ("style", o(self.style.map(|v| v.to_string()))),
            ("boundary", o(self.boundary.map(|v| v.to_string()))),
            ("lead3", self.lead3.clone()),
            ("remainder_method", self.remainder_method.clone()),
            ("expand_remainder", self.expand_remainder.to_string()),
            (
                "byte_limits",
                join(self.byte_limits.iter().map(|v| v.to_string()).collect()),
            ),
            ("curve", path(&self.curve)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| anyhow!("missing required setting {key}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\nseed = 7\nbeam = 3 # trailing\nentities = @entity1, @entity4\n",
            "t",
        )
        .unwrap();
        assert_eq!((c.seed, c.beam), (7, 3));
        assert_eq!(c.entities, ["@entity1", "@entity4"]);
        c.set("beam", "1").unwrap();
        assert_eq!(c.beam, 1);
        c.set("length_bin", "none").unwrap();
        assert_eq!(c.length_bin, None);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut c = RunConfig::default();
        let err = c.apply_text("seed = 1\nbatch_size = 3\n", "cfg").unwrap_err();
        assert!(format!("{err:#}").contains("cfg:2"));
        assert!(c.set("lr", "fast").is_err());
        assert!(c.apply_text("no equals sign", "cfg").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("corpus", "/tmp/x.jsonl").unwrap();
        c.set("byte_limits", "30,75").unwrap();
        c.set("hidden_size", "32").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.render(), "rendered").unwrap();
        assert_eq!(back, c);
    }
}
