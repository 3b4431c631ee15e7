use std::collections::BTreeMap;

use crate::tokenization::{pretokenize, reserved};

/// Mentions sorted longest first, each as its token sequence.
#[derive(Clone, Debug, Default)]
pub struct MentionTable {
    entries: Vec<(Vec<String>, String)>,
}

impl MentionTable {
    pub fn new(mentions: &BTreeMap<String, String>) -> Self {
        let mut entries: Vec<(Vec<String>, String)> = mentions
            .iter()
            .map(|(m, t)| (pretokenize(m), t.clone()))
            .filter(|(m, _)| !m.is_empty())
            .collect();
        // longest first; ties keep the map's (sorted) order
        entries.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
        MentionTable { entries }
    }

    /// Greedy left-to-right replacement: at each position the longest matching
    /// mention wins.
    pub fn replace(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.entries.iter().find(|(m, _)| tokens[i..].starts_with(m));
            match hit {
                Some((m, t)) => {
                    out.push(t.clone());
                    i += m.len();
                }
                None => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Anonymized {
    pub article: Vec<Vec<String>>,
    pub summary: Vec<Vec<String>>,
    /// Entity token → surface mention, for de-anonymization.
    pub inverse: BTreeMap<String, String>,
}

/// Replaces every occurrence of each mention by its entity token in both the
/// article and the summary.
pub fn anonymize(article: &[Vec<String>], summary: &[Vec<String>], mentions: &BTreeMap<String, String>) -> Anonymized {
    let table = MentionTable::new(mentions);
    let mut inverse = BTreeMap::new();
    for (m, t) in mentions {
        inverse.entry(t.clone()).or_insert_with(|| m.clone());
    }
    Anonymized {
        article: article.iter().map(|s| table.replace(s)).collect(),
        summary: summary.iter().map(|s| table.replace(s)).collect(),
        inverse,
    }
}

/// Expands entity tokens back to their surface mentions.
pub fn deanonymize(tokens: &[String], inverse: &BTreeMap<String, String>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        match inverse.get(t) {
            Some(m) => out.extend(pretokenize(m)),
            None => out.push(t.clone()),
        }
    }
    out
}

fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}

/// Fallback mention detector for raw text without an entity map: maximal runs of
/// capitalized tokens, ignoring a lone capitalized sentence-initial word. Tokens are
/// numbered in order of first appearance, up to `max_entities`.
pub fn detect_capitalized_mentions(sentences: &[Vec<String>], max_entities: usize) -> BTreeMap<String, String> {
    let mut order: Vec<String> = Vec::new();
    for sent in sentences {
        let mut i = 0;
        while i < sent.len() {
            if !is_capitalized(&sent[i]) || reserved::is_reserved(&sent[i]) {
                i += 1;
                continue;
            }
            let start = i;
            while i < sent.len() && is_capitalized(&sent[i]) && !reserved::is_reserved(&sent[i]) {
                i += 1;
            }
            if start == 0 && i == 1 {
                continue;
            }
            let mention = sent[start..i].join(" ");
            if !order.contains(&mention) {
                order.push(mention);
            }
        }
    }
    order
        .into_iter()
        .take(max_entities)
        .enumerate()
        .map(|(k, m)| (m, reserved::entity_token(k)))
        .collect()
}
