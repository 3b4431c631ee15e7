//! Subword segmentation, vocabularies, and the id codec built from them.

mod bpe;
pub mod reserved;
mod vocab;

pub use bpe::{detokenize, BpeModel, CONTINUATION, END_OF_WORD};
pub use vocab::{build_word_vocab, ReservedLayout, Vocabulary, BOS_ID, EOS_ID, PAD_ID, READ_BOUNDARY_ID, UNK_ID};

const SPLIT_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '"', '(', ')', '[', ']'];

/// Whitespace split plus separation of leading and trailing punctuation.
/// Reserved tokens such as `@entity3` survive intact.
pub fn pretokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lead_end = chunk.find(|c| !SPLIT_PUNCT.contains(&c)).unwrap_or(chunk.len());
        let (lead, rest) = chunk.split_at(lead_end);
        let trail_start = rest
            .rfind(|c| !SPLIT_PUNCT.contains(&c))
            .map(|i| i + rest[i..].chars().next().unwrap().len_utf8())
            .unwrap_or(0);
        let (core, trail) = rest.split_at(trail_start);
        out.extend(lead.chars().map(String::from));
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trail.chars().map(String::from));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segmenter {
    Bpe(BpeModel),
    /// Whole words; out-of-vocabulary words become the unknown token.
    Word,
}

/// Maps between word sequences and model ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextCodec {
    pub segmenter: Segmenter,
    pub vocab: Vocabulary,
}

impl TextCodec {
    pub fn new(segmenter: Segmenter, vocab: Vocabulary) -> Self {
        TextCodec { segmenter, vocab }
    }

    pub fn subwords(&self, word: &str) -> Vec<String> {
        match &self.segmenter {
            Segmenter::Bpe(m) => m.apply(word),
            Segmenter::Word => vec![word.to_string()],
        }
    }

    pub fn encode_word(&self, word: &str) -> Vec<usize> {
        if reserved::is_reserved(word) {
            if let Some(id) = self.vocab.id(word) {
                return vec![id];
            }
        }
        self.subwords(word).iter().map(|s| self.vocab.id_or_unk(s)).collect()
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().flat_map(|w| self.encode_word(w.as_ref())).collect()
    }

    /// Ids back to words; padding and sentence delimiters are skipped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        let pieces: Vec<&str> = ids
            .iter()
            .filter(|&&id| !matches!(id, PAD_ID | BOS_ID | EOS_ID))
            .map(|&id| self.vocab.token(id).unwrap_or(reserved::UNK))
            .collect();
        match self.segmenter {
            Segmenter::Bpe(_) => detokenize(&pieces),
            Segmenter::Word => pieces.into_iter().map(String::from).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretokenize_splits_edge_punctuation() {
        assert_eq!(
            pretokenize("Hello, world. (@entity3) said \"no\"!"),
            ["Hello", ",", "world", ".", "(", "@entity3", ")", "said", "\"", "no", "\"", "!"]
        );
        assert_eq!(pretokenize("3.5 e.g."), ["3.5", "e.g", "."]);
        assert_eq!(pretokenize("..."), [".", ".", "."]);
    }

    #[test]
    fn codec_round_trips_known_words() {
        let bpe = BpeModel::learn([("low", 5), ("lowest", 3), ("newer", 2)], 20);
        let mut counts = std::collections::HashMap::new();
        for w in ["low", "lowest", "newer"] {
            for s in bpe.apply(w) {
                *counts.entry(s).or_insert(0u64) += 1;
            }
        }
        let vocab = Vocabulary::from_counts(
            ReservedLayout::default(),
            counts.iter().map(|(k, &v)| (k.as_str(), v)),
            0,
        );
        let codec = TextCodec::new(Segmenter::Bpe(bpe), vocab);
        let words = ["lowest", "@entity5", "low", "newer"];
        let ids = codec.encode_words(&words);
        assert!(ids.iter().all(|&i| i != UNK_ID));
        assert_eq!(codec.decode(&ids), words);
    }
}
