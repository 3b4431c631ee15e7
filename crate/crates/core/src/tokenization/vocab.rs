use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::reserved::{self, NUM_LENGTH_BINS};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const READ_BOUNDARY_ID: usize = 4;

/// How many entity and source-style markers the reserved region holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReservedLayout {
    pub num_entities: usize,
    pub num_sources: usize,
}

impl Default for ReservedLayout {
    fn default() -> Self {
        ReservedLayout {
            num_entities: 64,
            num_sources: 2,
        }
    }
}

/// Dense token↔id map. Ids `0..reserved_len()` are the special and control tokens,
/// in a fixed order, so they are stable across subword retraining.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    layout: ReservedLayout,
}

impl Vocabulary {
    pub fn with_reserved(layout: ReservedLayout) -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
            layout,
        };
        for t in [
            reserved::PAD,
            reserved::BOS,
            reserved::EOS,
            reserved::UNK,
            reserved::READ_BOUNDARY,
        ] {
            v.push(t.to_string(), 0);
        }
        for b in 0..NUM_LENGTH_BINS {
            v.push(reserved::length_token(b), 0);
        }
        for k in 0..layout.num_entities {
            v.push(reserved::entity_token(k), 0);
        }
        for s in 0..layout.num_sources {
            v.push(reserved::source_token(s), 0);
        }
        v
    }

    fn push(&mut self, token: String, count: u64) {
        if let Some(&id) = self.index.get(&token) {
            self.counts[id] += count;
            return;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.counts.push(count);
    }

    /// Reserved tokens plus every non-reserved token with `count > min_count`,
    /// ordered by descending count then token text.
    pub fn from_counts<'a, I>(layout: ReservedLayout, counts: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut merged: HashMap<&str, u64> = HashMap::new();
        for (t, c) in counts {
            if !reserved::is_reserved(t) {
                *merged.entry(t).or_insert(0) += c;
            }
        }
        let mut kept: Vec<(&str, u64)> = merged.into_iter().filter(|&(_, c)| c > min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut v = Vocabulary::with_reserved(layout);
        for (t, c) in kept {
            v.push(t.to_string(), c);
        }
        v
    }

    pub fn layout(&self) -> ReservedLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn reserved_len(&self) -> usize {
        5 + NUM_LENGTH_BINS + self.layout.num_entities + self.layout.num_sources
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn is_control(&self, id: usize) -> bool {
        id < self.reserved_len()
    }

    /// Ids a decoder must never emit: padding, begin, unknown, the read boundary,
    /// and the length and source markers. Entity tokens stay generatable.
    pub fn generation_banned(&self) -> Vec<usize> {
        let mut ids = vec![PAD_ID, BOS_ID, UNK_ID, READ_BOUNDARY_ID];
        ids.extend(5..5 + NUM_LENGTH_BINS);
        let src = 5 + NUM_LENGTH_BINS + self.layout.num_entities;
        ids.extend(src..src + self.layout.num_sources);
        ids
    }

    pub fn length_id(&self, bin: usize) -> Result<usize> {
        if bin >= NUM_LENGTH_BINS {
            return Err(Error::UnknownToken(reserved::length_token(bin)));
        }
        Ok(5 + bin)
    }

    pub fn entity_id(&self, token: &str) -> Result<usize> {
        match reserved::parse_entity(token) {
            Some(k) if k < self.layout.num_entities => Ok(5 + NUM_LENGTH_BINS + k),
            _ => Err(Error::UnknownToken(token.to_string())),
        }
    }

    pub fn source_id(&self, style: usize) -> Result<usize> {
        if style >= self.layout.num_sources {
            return Err(Error::UnknownToken(reserved::source_token(style)));
        }
        Ok(5 + NUM_LENGTH_BINS + self.layout.num_entities + style)
    }

    /// One `token count` line per id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(out, "{t} {c}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (t, c) = line
                .rsplit_once(' ')
                .ok_or_else(|| parse_err(i + 1, "expected \"token count\"".into()))?;
            let c: u64 = c.parse().map_err(|_| parse_err(i + 1, format!("bad count {c:?}")))?;
            entries.push((t.to_string(), c));
        }
        let num_entities = entries
            .iter()
            .filter(|(t, _)| reserved::parse_entity(t).is_some())
            .count();
        let num_sources = entries
            .iter()
            .filter(|(t, _)| reserved::parse_source(t).is_some())
            .count();
        let layout = ReservedLayout {
            num_entities,
            num_sources,
        };
        let mut v = Vocabulary::with_reserved(layout);
        let reserved_len = v.reserved_len();
        for (i, (t, c)) in entries.into_iter().enumerate() {
            if i < reserved_len {
                if v.tokens.get(i).map(String::as_str) != Some(t.as_str()) {
                    return Err(parse_err(i + 1, format!("reserved token {t:?} out of place")));
                }
                v.counts[i] = c;
            } else {
                if v.index.contains_key(&t) {
                    return Err(parse_err(i + 1, format!("duplicate token {t:?}")));
                }
                v.push(t, c);
            }
        }
        Ok(v)
    }
}

/// Word-level vocabulary for the non-subword configuration: tokens seen more than
/// `min_count` times; everything else maps to the unknown token.
pub fn build_word_vocab<'a, I>(counts: I, min_count: u64, layout: ReservedLayout) -> Vocabulary
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    Vocabulary::from_counts(layout, counts, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_strict() {
        let v = build_word_vocab(
            [("often", 21), ("edge", 20), ("rare", 1)],
            20,
            ReservedLayout::default(),
        );
        assert!(v.id("often").is_some());
        assert!(v.id("edge").is_none());
        assert_eq!(v.id_or_unk("edge"), UNK_ID);
    }

    #[test]
    fn empty_corpus_has_only_reserved_tokens() {
        let v = build_word_vocab(std::iter::empty(), 20, ReservedLayout::default());
        assert_eq!(v.len(), v.reserved_len());
        assert_eq!(v.token(PAD_ID), Some("<pad>"));
        assert_eq!(v.token(EOS_ID), Some("</s>"));
        assert_eq!(v.token(READ_BOUNDARY_ID), Some("@readBoundary"));
    }

    #[test]
    fn control_ids_are_dense_and_resolvable() {
        let v = Vocabulary::with_reserved(ReservedLayout {
            num_entities: 3,
            num_sources: 2,
        });
        assert_eq!(v.token(v.length_id(9).unwrap()), Some("@len9"));
        assert_eq!(v.token(v.entity_id("@entity2").unwrap()), Some("@entity2"));
        assert!(v.entity_id("@entity3").is_err());
        assert_eq!(v.token(v.source_id(1).unwrap()), Some("@genSource1"));
        assert!(v.source_id(2).is_err());
        assert!(v.is_control(v.source_id(1).unwrap()));
        assert_eq!(v.reserved_len(), v.len());
    }

    #[test]
    fn reserved_tokens_in_counts_are_ignored() {
        let v = Vocabulary::from_counts(ReservedLayout::default(), [("@entity0", 100), ("x", 1)], 0);
        assert_eq!(v.len(), v.reserved_len() + 1);
    }
}
