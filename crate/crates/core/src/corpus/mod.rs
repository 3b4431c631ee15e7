//! Corpus records and the preprocessing that turns them into model inputs.

mod align;
mod anonymize;
mod binning;
mod control;
mod record;

pub use align::{align_summary, make_remainder_examples, remainder_boundaries, remainder_summary, RemainderExample};
pub use anonymize::{anonymize, deanonymize, detect_capitalized_mentions, Anonymized, MentionTable};
pub use binning::{assign_bin, compute_length_bins, LengthBinning};
pub use control::{
    compose_control_prefix, entities_in, lead3_entities, select_training_entities, ControlSpec, EntityPolicy,
};
pub use record::{read_corpus, write_corpus, ArticleRecord, RawRecord};

pub const DEFAULT_ARTICLE_LIMIT: usize = 400;

pub fn truncate_article<T: Clone>(tokens: &[T], limit: usize) -> Vec<T> {
    tokens[..tokens.len().min(limit)].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation() {
        let art: Vec<usize> = (0..758).collect();
        assert_eq!(
            truncate_article(&art, DEFAULT_ARTICLE_LIMIT),
            (0..400).collect::<Vec<_>>()
        );
        assert_eq!(truncate_article(&art[..300], 400).len(), 300);
        assert_eq!(truncate_article(&art, 1), [0]);
    }
}
