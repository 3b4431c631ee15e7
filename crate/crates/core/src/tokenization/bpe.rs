//! Byte-pair encoding: greedy most-frequent-pair merging over character sequences.
//!
//! Words are split into characters followed by a separate end-of-word symbol.
//! Segmented output marks every non-final subword with the `@@` continuation
//! suffix, so detokenization is a pure string operation.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::reserved::is_reserved;
use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";
pub const END_OF_WORD: &str = "</w>";

type Pair = (String, String);

/// Stand-in for the end-of-word symbol while learning; it sorts after every
/// character, so boundary pairs lose frequency ties to in-word pairs.
const LEARN_END: char = '\u{10FFFF}';

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<Pair>,
    ranks: HashMap<Pair, usize>,
}

fn initial_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    symbols.push(END_OF_WORD.to_string());
    symbols
}

fn strip_end(symbol: &str) -> &str {
    symbol.strip_suffix(END_OF_WORD).unwrap_or(symbol)
}

fn learning_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    symbols.push(LEARN_END.to_string());
    symbols
}

fn external(symbol: &str) -> String {
    match symbol.strip_suffix(LEARN_END) {
        Some(stem) => format!("{stem}{END_OF_WORD}"),
        None => symbol.to_string(),
    }
}

struct Word {
    symbols: Vec<String>,
    count: i64,
}

impl Word {
    fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.symbols.windows(2).map(|w| (w[0].clone(), w[1].clone()))
    }

    fn merge(&mut self, pair: &Pair, merged: &str) {
        let mut out = Vec::with_capacity(self.symbols.len());
        let mut i = 0;
        while i < self.symbols.len() {
            if i + 1 < self.symbols.len() && self.symbols[i] == pair.0 && self.symbols[i + 1] == pair.1 {
                out.push(merged.to_string());
                i += 2;
            } else {
                out.push(std::mem::take(&mut self.symbols[i]));
                i += 1;
            }
        }
        self.symbols = out;
    }
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        BpeModel { merges, ranks }
    }

    /// Learns up to `num_merges` merges from a word-frequency table. Reserved
    /// tokens are excluded and no merge may produce one. Equal-frequency pairs
    /// are broken by lexicographic order of `(left, right)`, with the end-of-word
    /// symbol ordered after all characters.
    pub fn learn<'a, I>(word_counts: I, num_merges: usize) -> Self
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut table: Vec<(&str, u64)> = word_counts
            .into_iter()
            .filter(|(w, c)| *c > 0 && !w.is_empty() && !is_reserved(w))
            .collect();
        table.sort();
        let mut words: Vec<Word> = Vec::new();
        for (w, c) in table {
            match words.last_mut() {
                // merge duplicate entries of the same word
                Some(last) if last.symbols == learning_symbols(w) => last.count += c as i64,
                _ => words.push(Word {
                    symbols: learning_symbols(w),
                    count: c as i64,
                }),
            }
        }

        let mut pair_counts: HashMap<Pair, i64> = HashMap::new();
        let mut pair_words: HashMap<Pair, HashSet<usize>> = HashMap::new();
        for (idx, word) in words.iter().enumerate() {
            for p in word.pairs() {
                *pair_counts.entry(p.clone()).or_insert(0) += word.count;
                pair_words.entry(p).or_default().insert(idx);
            }
        }
        let mut heap: BinaryHeap<(i64, Reverse<Pair>)> =
            pair_counts.iter().map(|(p, &c)| (c, Reverse(p.clone()))).collect();

        let mut merges = Vec::new();
        let mut banned: HashSet<Pair> = HashSet::new();
        while merges.len() < num_merges {
            let Some((count, Reverse(pair))) = heap.pop() else {
                break;
            };
            if count <= 0 {
                break;
            }
            if pair_counts.get(&pair).copied() != Some(count) || banned.contains(&pair) {
                continue;
            }
            let merged = format!("{}{}", pair.0, pair.1);
            if is_reserved(merged.trim_end_matches(LEARN_END)) {
                banned.insert(pair);
                continue;
            }

            let mut affected: Vec<usize> = pair_words
                .get(&pair)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            affected.sort_unstable();
            let mut changed: BTreeSet<Pair> = BTreeSet::new();
            for idx in affected {
                let word = &mut words[idx];
                if !word.pairs().any(|p| p == pair) {
                    continue;
                }
                for p in word.pairs() {
                    *pair_counts.get_mut(&p).expect("pair was counted") -= word.count;
                    changed.insert(p);
                }
                word.merge(&pair, &merged);
                for p in word.pairs() {
                    *pair_counts.entry(p.clone()).or_insert(0) += word.count;
                    pair_words.entry(p.clone()).or_default().insert(idx);
                    changed.insert(p);
                }
            }
            for p in changed {
                let c = pair_counts[&p];
                if c > 0 {
                    heap.push((c, Reverse(p)));
                }
            }
            merges.push(pair);
        }
        BpeModel::from_merges(merges.into_iter().map(|(l, r)| (external(&l), external(&r))).collect())
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Raw symbols after applying merges in rank order, end-of-word symbol included.
    fn segment_symbols(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let pair = self.merges[rank].clone();
            let merged = format!("{}{}", pair.0, pair.1);
            let mut w = Word { symbols, count: 0 };
            w.merge(&pair, &merged);
            symbols = w.symbols;
        }
        symbols
    }

    /// Segments one whitespace-free word. Reserved tokens pass through unchanged.
    pub fn apply(&self, word: &str) -> Vec<String> {
        if is_reserved(word) {
            return vec![word.to_string()];
        }
        let mut symbols = self.segment_symbols(word);
        if symbols.last().map(String::as_str) == Some(END_OF_WORD) {
            symbols.pop();
        }
        let n = symbols.len();
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let s = strip_end(&s).to_string();
                if i + 1 < n {
                    s + CONTINUATION
                } else {
                    s
                }
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let Some((l, r)) = line.split_once(' ') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected \"left right\"".into(),
                });
            };
            merges.push((l.to_string(), r.to_string()));
        }
        Ok(BpeModel::from_merges(merges))
    }
}

/// Joins subword tokens back into words.
pub fn detokenize<S: AsRef<str>>(subwords: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for piece in subwords {
        let piece = piece.as_ref();
        match piece.strip_suffix(CONTINUATION) {
            Some(stem) => cur.push_str(stem),
            None => {
                cur.push_str(piece);
                words.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(model: &BpeModel) -> Vec<(&str, &str)> {
        model.merges().iter().map(|(a, b)| (a.as_str(), b.as_str())).collect()
    }

    #[test]
    fn zero_merges_gives_characters() {
        let model = BpeModel::learn([("low", 2)], 0);
        assert!(model.is_empty());
        assert_eq!(model.apply("low"), ["l@@", "o@@", "w"]);
    }

    #[test]
    fn low_lowest_fixture() {
        let model = BpeModel::learn([("low", 2), ("lowest", 1)], 2);
        assert_eq!(pairs(&model), [("l", "o"), ("lo", "w")]);
        assert_eq!(model.apply("low"), ["low"]);
        assert_eq!(model.apply("lowest"), ["low@@", "e@@", "s@@", "t"]);
    }

    #[test]
    fn single_word_corpus() {
        let model = BpeModel::learn([("aa", 1)], 1);
        assert_eq!(pairs(&model), [("a", "a")]);
    }

    #[test]
    fn empty_corpus_gives_empty_model() {
        let model = BpeModel::learn(std::iter::empty(), 10);
        assert!(model.is_empty());
        assert_eq!(model.apply("xy"), ["x@@", "y"]);
    }

    #[test]
    fn reserved_tokens_pass_through_and_are_never_learned() {
        let model = BpeModel::learn([("@entity3", 50), ("@entity3x", 50), ("cat", 1)], 100);
        assert_eq!(model.apply("@entity3"), ["@entity3"]);
        for (l, r) in model.merges() {
            assert!(!is_reserved(strip_end(&format!("{l}{r}"))));
        }
    }

    #[test]
    fn end_of_word_merges_are_stripped() {
        let model = BpeModel::learn([("ab", 10)], 3);
        assert_eq!(model.apply("ab"), ["ab"]);
        assert_eq!(model.apply("b"), ["b"]);
    }

    #[test]
    fn detokenize_joins_continuations() {
        assert_eq!(detokenize(&["low@@", "e@@", "s@@", "t", "x"]), ["lowest", "x"]);
    }
}
