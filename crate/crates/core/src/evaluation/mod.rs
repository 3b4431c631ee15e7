//! ROUGE scoring, baselines, and control-response measurements.

mod metrics;
mod rouge;

pub use metrics::{
    corpus_eval, entity_occurrence_rate, format_curve, lead3, length_response_curve, spearman, CorpusRouge, EvalReport,
};
pub use rouge::{
    lcs_len, normalize, rouge, rouge_l, rouge_n, rouge_recall_truncated, rouge_text, truncate_to_bytes, RougeScore,
    RougeVariant,
};
