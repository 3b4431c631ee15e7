use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, DecodeConstraints};
use super::stepper::ConvStepper;
use crate::corpus::{align_summary, compose_control_prefix, lead3_entities, ControlSpec};
use crate::error::{Error, Result};
use crate::model::ConvSeq2Seq;
use crate::numeric::Real;
use crate::pipeline::{build_source, split_sentences, SourceLayout};
use crate::tokenization::TextCodec;

/// One decoded summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ids: Vec<usize>,
    pub words: Vec<String>,
    pub score: Real,
    /// Every continuation was blocked at some step and the end token was forced.
    pub fallback: bool,
    /// Nothing was left to summarize, so no decode ran.
    pub empty_remainder: bool,
}

impl Summary {
    fn empty() -> Self {
        Summary {
            ids: Vec::new(),
            words: Vec::new(),
            score: 0.0,
            fallback: false,
            empty_remainder: true,
        }
    }
}

/// A trained model with its codec and decoding settings.
pub struct Summarizer<'m> {
    pub model: &'m ConvSeq2Seq,
    pub codec: &'m TextCodec,
    pub constraints: DecodeConstraints,
    pub article_limit: usize,
}

impl<'m> Summarizer<'m> {
    pub fn new(model: &'m ConvSeq2Seq, codec: &'m TextCodec) -> Self {
        Summarizer {
            model,
            codec,
            constraints: DecodeConstraints::default(),
            article_limit: crate::corpus::DEFAULT_ARTICLE_LIMIT,
        }
    }

    pub fn source(&self, article: &[Vec<String>], control: &ControlSpec, layout: SourceLayout) -> Result<Vec<usize>> {
        let prefix = compose_control_prefix(control, &self.codec.vocab)?;
        build_source(
            self.codec,
            &prefix,
            article,
            layout,
            control.remainder_boundary,
            self.article_limit,
        )
    }

    pub fn decode_source(&self, source: &[usize]) -> Result<Summary> {
        let stepper = ConvStepper::new(self.model, source, self.codec.vocab.generation_banned())?;
        let d = beam_search(&stepper, &self.constraints)?;
        Ok(Summary {
            words: self.codec.decode(&d.tokens),
            ids: d.tokens,
            score: d.score,
            fallback: d.fallback,
            empty_remainder: false,
        })
    }

    pub fn summarize(&self, article: &[Vec<String>], control: &ControlSpec, layout: SourceLayout) -> Result<Summary> {
        if layout != SourceLayout::Full {
            match control.remainder_boundary {
                Some(b) if b >= article.len() => return Ok(Summary::empty()),
                Some(_) => {}
                None => return Err(Error::Contract("remainder layouts need a boundary".into())),
            }
        }
        self.decode_source(&self.source(article, control, layout)?)
    }

    /// Summary of the sentences from `boundary` on, by one of the remainder methods.
    /// `control` supplies the other markers; its boundary field is ignored.
    pub fn remainder(
        &self,
        article: &[Vec<String>],
        boundary: usize,
        method: RemainderMethod,
        control: &ControlSpec,
    ) -> Result<Summary> {
        let mut control = control.clone();
        if method == RemainderMethod::FullSummary {
            control.remainder_boundary = None;
            return self.summarize(article, &control, SourceLayout::Full);
        }
        if boundary >= article.len() {
            return Ok(Summary::empty());
        }
        match method {
            RemainderMethod::PostInferenceAlign => {
                control.remainder_boundary = None;
                let full = self.summarize(article, &control, SourceLayout::Full)?;
                let sentences = split_sentences(&full.words);
                let alignment = align_summary(article, &sentences);
                let words: Vec<String> = sentences
                    .into_iter()
                    .zip(alignment)
                    .filter(|(_, a)| *a >= boundary)
                    .flat_map(|(s, _)| s)
                    .collect();
                Ok(Summary {
                    ids: self.codec.encode_words(&words),
                    words,
                    ..full
                })
            }
            RemainderMethod::RemainderOnly | RemainderMethod::ReadAndRemainder => {
                control.remainder_boundary = Some(boundary);
                let layout = if method == RemainderMethod::RemainderOnly {
                    SourceLayout::RemainderOnly
                } else {
                    SourceLayout::ReadAndRemainder
                };
                self.summarize(article, &control, layout)
            }
            RemainderMethod::FullSummary => unreachable!(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderMethod {
    /// Summarize the whole article, ignoring the boundary.
    FullSummary,
    /// Summarize the whole article and drop sentences aligned before the boundary.
    PostInferenceAlign,
    RemainderOnly,
    ReadAndRemainder,
}

impl std::str::FromStr for RemainderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_summary" => Ok(RemainderMethod::FullSummary),
            "post_inference_align" => Ok(RemainderMethod::PostInferenceAlign),
            "remainder_only" => Ok(RemainderMethod::RemainderOnly),
            "read_and_remainder" => Ok(RemainderMethod::ReadAndRemainder),
            _ => Err(Error::Config(format!("unknown remainder method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lead3Entities {
    None,
    /// One entity drawn uniformly from the first three sentences.
    Random,
    /// Every entity of the first three sentences.
    All,
}

/// Constant markers chosen on validation data, applied without user input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedControls {
    pub length_bin: Option<usize>,
    pub source_style: Option<usize>,
    pub entities: Lead3Entities,
}

/// The control request used when the user gives none.
pub fn fixed_control_spec<R: Rng + ?Sized>(article: &[Vec<String>], fixed: &FixedControls, rng: &mut R) -> ControlSpec {
    let lead = lead3_entities(article);
    let entities = match fixed.entities {
        Lead3Entities::None => Vec::new(),
        Lead3Entities::Random => lead.choose(rng).cloned().into_iter().collect(),
        Lead3Entities::All => lead,
    };
    ControlSpec {
        length_bin: fixed.length_bin,
        entities,
        source_style: fixed.source_style,
        remainder_boundary: None,
    }
}

pub const NUM_PARTITIONS: usize = 10;

/// Decile of the article a boundary falls in.
pub fn boundary_partition(boundary: usize, num_sentences: usize) -> usize {
    if num_sentences == 0 {
        return 0;
    }
    (boundary * NUM_PARTITIONS / num_sentences).min(NUM_PARTITIONS - 1)
}

/// Best length bin for each boundary decile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionedLengths {
    pub bins: Vec<usize>,
}

impl PartitionedLengths {
    /// `items` are `(boundary, num_sentences)` validation cases; `score(item, bin)`
    /// rates decoding item `item` with length marker `bin`. Each decile gets the
    /// bin with the highest mean score; ties go to the lower bin and deciles
    /// without items take `fallback_bin`.
    pub fn fit<F>(items: &[(usize, usize)], num_bins: usize, fallback_bin: usize, mut score: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<Real>,
    {
        if num_bins == 0 {
            return Err(Error::Config("no length bins to choose from".into()));
        }
        let mut sums = vec![vec![0.0; num_bins]; NUM_PARTITIONS];
        let mut counts = [0usize; NUM_PARTITIONS];
        for (i, &(b, n)) in items.iter().enumerate() {
            let p = boundary_partition(b, n);
            counts[p] += 1;
            for (bin, slot) in sums[p].iter_mut().enumerate() {
                *slot += score(i, bin)?;
            }
        }
        let bins = sums
            .iter()
            .zip(counts)
            .map(|(s, c)| match c {
                0 => fallback_bin,
                _ => super::tune::argmax_index(s).unwrap_or(fallback_bin),
            })
            .collect();
        Ok(PartitionedLengths { bins })
    }

    pub fn bin_for(&self, boundary: usize, num_sentences: usize) -> usize {
        self.bins[boundary_partition(boundary, num_sentences)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sents(text: &[&str]) -> Vec<Vec<String>> {
        text.iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn lead3_all_takes_every_lead_entity() {
        let article = sents(&["@entity1 spoke .", "x y .", "@entity4 and @entity1 .", "@entity9 ."]);
        let fixed = FixedControls {
            length_bin: Some(3),
            source_style: Some(0),
            entities: Lead3Entities::All,
        };
        let spec = fixed_control_spec(&article, &fixed, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(spec.entities, ["@entity1", "@entity4"]);
        assert_eq!(spec.length_bin, Some(3));
    }

    #[test]
    fn no_lead_entities_gives_length_and_style_only() {
        let article = sents(&["a b .", "c d ."]);
        for mode in [Lead3Entities::Random, Lead3Entities::All] {
            let fixed = FixedControls {
                length_bin: Some(1),
                source_style: Some(1),
                entities: mode,
            };
            let spec = fixed_control_spec(&article, &fixed, &mut ChaCha8Rng::seed_from_u64(0));
            assert!(spec.entities.is_empty());
            assert_eq!((spec.length_bin, spec.source_style), (Some(1), Some(1)));
        }
    }

    #[test]
    fn random_lead_entity_is_seeded() {
        let article = sents(&["@entity1 @entity2 @entity3 @entity4 @entity5 ."]);
        let fixed = FixedControls {
            length_bin: None,
            source_style: None,
            entities: Lead3Entities::Random,
        };
        let draw = |seed| fixed_control_spec(&article, &fixed, &mut ChaCha8Rng::seed_from_u64(seed)).entities;
        assert_eq!(draw(7), draw(7));
        assert_eq!(draw(7).len(), 1);
        let seen: std::collections::BTreeSet<_> = (0..50).map(|s| draw(s)[0].clone()).collect();
        assert!(seen.len() > 1);
    }

    #[test]
    fn partitions_pick_best_bin_per_decile() {
        assert_eq!(boundary_partition(0, 20), 0);
        assert_eq!(boundary_partition(19, 20), 9);
        assert_eq!(boundary_partition(25, 20), 9);
        let items = [(1, 10), (1, 10), (8, 10)];
        // early boundaries favour bin 7, late ones bin 2
        let fitted = PartitionedLengths::fit(&items, 10, 4, |i, bin| {
            let want = if items[i].0 < 5 { 7.0 } else { 2.0 };
            Ok(-(bin as Real - want).abs())
        })
        .unwrap();
        assert_eq!(fitted.bin_for(1, 10), 7);
        assert_eq!(fitted.bin_for(8, 10), 2);
        assert_eq!(fitted.bin_for(5, 10), 4);
    }
}
