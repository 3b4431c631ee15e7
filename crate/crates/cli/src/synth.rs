//! Seeded toy corpora, each isolating one control behaviour.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use ctrlsum::corpus::ArticleRecord;
use ctrlsum::tokenization::reserved::{entity_token, NUM_LENGTH_BINS};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthTask {
    LengthCopy,
    EntityFacts,
    StylePair,
    RemainderTags,
}

impl std::str::FromStr for SynthTask {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "length_copy" => SynthTask::LengthCopy,
            "entity_facts" => SynthTask::EntityFacts,
            "style_pair" => SynthTask::StylePair,
            "remainder_tags" => SynthTask::RemainderTags,
            _ => bail!("unknown synthetic task {s:?}"),
        })
    }
}

pub const FACTS_PER_ARTICLE: usize = 5;
pub const NUM_SYNTH_ENTITIES: usize = 30;
pub const KEY_TAG: &str = "key";
pub const OTHER_TAG: &str = "note";

/// Suffix appended to the summary for each style.
pub const STYLE_TEMPLATES: [&[&str]; 2] = [&["reporters", "said", "."], &["officials", "confirmed", "today", "."]];

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn words<R: Rng>(rng: &mut R, pool: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect()
}

fn record(id: String, source: usize, article: Vec<Vec<String>>, summary: Vec<Vec<String>>) -> ArticleRecord {
    ArticleRecord {
        id,
        source_label: source,
        article_sentences: article,
        summary_sentences: summary,
        entity_mentions: BTreeMap::new(),
    }
}

/// Length of the copied prefix for a length_copy example in group `bin`.
pub fn copy_length(bin: usize, jitter: usize) -> usize {
    3 + 3 * bin + jitter
}

fn length_copy<R: Rng>(rng: &mut R, i: usize) -> ArticleRecord {
    let vocab = pool("w", 30);
    let article: Vec<Vec<String>> = (0..4)
        .map(|_| {
            let mut s = words(rng, &vocab, 9);
            s.push(".".into());
            s
        })
        .collect();
    let m = copy_length(i % NUM_LENGTH_BINS, rng.random_range(0..3));
    let summary = article.concat()[..m].to_vec();
    record(format!("len{i}"), 0, article, vec![summary])
}

fn entity_facts<R: Rng>(rng: &mut R, i: usize) -> ArticleRecord {
    let verbs = pool("v", 10);
    let objects = pool("o", 20);
    let mut ents: Vec<usize> = (0..NUM_SYNTH_ENTITIES).collect();
    ents.shuffle(rng);
    let article: Vec<Vec<String>> = ents[..FACTS_PER_ARTICLE]
        .iter()
        .map(|&e| {
            vec![
                entity_token(e),
                verbs.choose(rng).unwrap().clone(),
                objects.choose(rng).unwrap().clone(),
                ".".into(),
            ]
        })
        .collect();
    let pick = rng.random_range(0..FACTS_PER_ARTICLE);
    let summary = vec![article[pick].clone()];
    record(format!("ent{i}"), 0, article, summary)
}

fn style_pair<R: Rng>(rng: &mut R, i: usize) -> ArticleRecord {
    let vocab = pool("w", 30);
    let article: Vec<Vec<String>> = (0..3)
        .map(|_| {
            let mut s = words(rng, &vocab, 5);
            s.push(".".into());
            s
        })
        .collect();
    let style = rng.random_range(0..STYLE_TEMPLATES.len());
    let mut lead = article[0].clone();
    lead.pop();
    let tail: Vec<String> = STYLE_TEMPLATES[style].iter().map(|w| w.to_string()).collect();
    let summary = vec![[lead, tail].concat()];
    record(format!("sty{i}"), style, article, summary)
}

fn remainder_tags<R: Rng>(rng: &mut R, i: usize) -> ArticleRecord {
    let vocab = pool("w", 40);
    let n = 10;
    let mut keys: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, 3).copied().collect();
    keys.sort_unstable();
    let mut article = Vec::with_capacity(n);
    let mut summary = Vec::new();
    for s in 0..n {
        let content = words(rng, &vocab, 3);
        let tag = if keys.contains(&s) { KEY_TAG } else { OTHER_TAG };
        article.push([vec![tag.to_string()], content.clone(), vec![".".into()]].concat());
        if keys.contains(&s) {
            summary.push([content, vec![".".into()]].concat());
        }
    }
    record(format!("rem{i}"), 0, article, summary)
}

/// `size` records of `task`, identical for identical seeds.
pub fn generate(task: SynthTask, size: usize, seed: u64) -> Result<Vec<ArticleRecord>> {
    if size == 0 {
        bail!("synthetic corpus size must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size)
        .map(|i| match task {
            SynthTask::LengthCopy => length_copy(&mut rng, i),
            SynthTask::EntityFacts => entity_facts(&mut rng, i),
            SynthTask::StylePair => style_pair(&mut rng, i),
            SynthTask::RemainderTags => remainder_tags(&mut rng, i),
        })
        .collect())
}

/// True when `words` end with the template of `style` and contain no other
/// style's template words.
pub fn style_matches(words: &[String], style: usize) -> bool {
    let own = STYLE_TEMPLATES[style];
    let ends = words.len() >= own.len() && words[words.len() - own.len()..].iter().zip(own).all(|(a, b)| a == b);
    let foreign = STYLE_TEMPLATES
        .iter()
        .enumerate()
        .filter(|&(s, _)| s != style)
        .flat_map(|(_, t)| t.iter().filter(|w| **w != "."))
        .any(|w| words.iter().any(|x| x == w));
    ends && !foreign
}
