use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::record::ArticleRecord;
use crate::error::{Error, Result};
use crate::tokenization::{reserved, Vocabulary};

/// A summary request: which control markers to prepend, and where the reader stopped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_bin: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_style: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder_boundary: Option<usize>,
}

impl ControlSpec {
    pub fn is_empty(&self) -> bool {
        self.length_bin.is_none() && self.entities.is_empty() && self.source_style.is_none()
    }
}

/// Marker ids in the fixed order length, entities, source style.
pub fn compose_control_prefix(spec: &ControlSpec, vocab: &Vocabulary) -> Result<Vec<usize>> {
    let mut prefix = Vec::new();
    if let Some(bin) = spec.length_bin {
        prefix.push(vocab.length_id(bin)?);
    }
    for e in &spec.entities {
        prefix.push(vocab.entity_id(e)?);
    }
    if let Some(style) = spec.source_style {
        prefix.push(vocab.source_id(style)?);
    }
    Ok(prefix)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityPolicy {
    /// Every entity of the reference summary.
    ReferenceAll,
    /// Reference entities the baseline decode failed to mention.
    ReferenceMinusBaseline,
    /// One entity drawn uniformly from the first three article sentences.
    Lead3Random,
}

/// Distinct entity tokens in order of first appearance.
pub fn entities_in<'a, I>(tokens: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if reserved::is_entity_token(t) && !out.contains(t) {
            out.push(t.clone());
        }
    }
    out
}

pub fn lead3_entities(article: &[Vec<String>]) -> Vec<String> {
    entities_in(article.iter().take(3).flatten())
}

/// Entities to prepend to a training example. An empty result means the example
/// is trained without entity markers.
pub fn select_training_entities<R: Rng + ?Sized>(
    record: &ArticleRecord,
    policy: EntityPolicy,
    baseline_output: Option<&[String]>,
    rng: &mut R,
) -> Result<Vec<String>> {
    let reference = entities_in(record.summary_sentences.iter().flatten());
    match policy {
        EntityPolicy::ReferenceAll => Ok(reference),
        EntityPolicy::ReferenceMinusBaseline => {
            let baseline = baseline_output.ok_or_else(|| {
                Error::Contract(format!(
                    "record {}: reference_minus_baseline needs a baseline decode",
                    record.id
                ))
            })?;
            Ok(reference.into_iter().filter(|e| !baseline.contains(e)).collect())
        }
        EntityPolicy::Lead3Random => {
            let lead = lead3_entities(&record.article_sentences);
            Ok(lead.choose(rng).cloned().into_iter().collect())
        }
    }
}
