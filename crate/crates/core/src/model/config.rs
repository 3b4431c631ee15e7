use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSets {
    Single,
    /// Tokens up to and including `@readBoundary` use a dedicated table; positions
    /// restart at zero for the remainder.
    ReadRemainder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionPattern {
    /// Even decoder layers attend to the source, odd layers to earlier decoder states.
    Alternating,
    SourceOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub kernel_width: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub dropout_rate: f64,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub position_sets: PositionSets,
    pub attention_pattern: AttentionPattern,
    #[serde(default = "default_true")]
    pub tie_embeddings: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Full-size news configuration.
    pub fn cnn_dailymail(vocab_size: usize) -> Self {
        ModelConfig {
            encoder_layers: 8,
            decoder_layers: 8,
            kernel_width: 3,
            hidden_size: 512,
            embed_size: 340,
            dropout_rate: 0.2,
            vocab_size,
            max_positions: 1024,
            position_sets: PositionSets::Single,
            attention_pattern: AttentionPattern::Alternating,
            tie_embeddings: true,
        }
    }

    /// Smaller configuration for short-summary corpora.
    pub fn duc(vocab_size: usize) -> Self {
        ModelConfig {
            encoder_layers: 6,
            decoder_layers: 6,
            hidden_size: 256,
            ..Self::cnn_dailymail(vocab_size)
        }
    }

    /// Desk-scale configuration used by the synthetic experiments.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            encoder_layers: 2,
            decoder_layers: 3,
            kernel_width: 3,
            hidden_size: 48,
            embed_size: 48,
            dropout_rate: 0.0,
            vocab_size,
            max_positions: 512,
            position_sets: PositionSets::Single,
            attention_pattern: AttentionPattern::Alternating,
            tie_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.kernel_width.is_multiple_of(2) {
            return fail(format!("kernel_width must be odd, got {}", self.kernel_width));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("encoder and decoder need at least one layer".into());
        }
        if self.hidden_size == 0 || self.embed_size == 0 || self.vocab_size == 0 || self.max_positions == 0 {
            return fail("sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Whether decoder layer `layer` attends to the source (otherwise to itself).
    pub fn attends_source(&self, layer: usize) -> bool {
        match self.attention_pattern {
            AttentionPattern::Alternating => layer.is_multiple_of(2),
            AttentionPattern::SourceOnly => true,
        }
    }

    pub fn needs_adapters(&self) -> bool {
        self.embed_size != self.hidden_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            ModelConfig::cnn_dailymail(100),
            ModelConfig::duc(100),
            ModelConfig::toy(20),
        ] {
            c.validate().unwrap();
        }
        let duc = ModelConfig::duc(10);
        assert_eq!((duc.encoder_layers, duc.hidden_size), (6, 256));
        let mut even = ModelConfig::toy(10);
        even.kernel_width = 4;
        assert!(even.validate().is_err());
    }

    #[test]
    fn alternation_starts_with_source() {
        let c = ModelConfig::toy(10);
        assert!(c.attends_source(0));
        assert!(!c.attends_source(1));
        assert!(c.attends_source(2));
    }

    #[test]
    fn config_json_round_trip() {
        let c = ModelConfig::cnn_dailymail(30_000);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&text).unwrap(), c);
    }
}
