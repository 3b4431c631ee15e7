use serde::{Deserialize, Serialize};

use super::record::ArticleRecord;
use crate::evaluation::rouge_l;

/// For each summary sentence, the article sentence with the highest ROUGE-L F1
/// against it on lowercased tokens. Ties go to the lowest index.
pub fn align_summary(article: &[Vec<String>], summary: &[Vec<String>]) -> Vec<usize> {
    let lower = |s: &Vec<String>| -> Vec<String> { s.iter().map(|t| t.to_lowercase()).collect() };
    let article: Vec<Vec<String>> = article.iter().map(lower).collect();
    summary
        .iter()
        .map(|sent| {
            let sent = lower(sent);
            let mut best = (0, f64::NEG_INFINITY);
            for (i, a) in article.iter().enumerate() {
                let f = rouge_l(&sent, a).f1;
                if f > best.1 {
                    best = (i, f);
                }
            }
            best.0
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderExample {
    pub id: String,
    pub source_label: usize,
    pub boundary: usize,
    pub read_sentences: Vec<Vec<String>>,
    pub remainder_sentences: Vec<Vec<String>>,
    pub remainder_summary_sentences: Vec<Vec<String>>,
}

/// Read/remainder boundaries halfway between neighbouring alignment points that
/// are at least two sentences apart. Points are taken in article order.
pub fn remainder_boundaries(alignment: &[usize]) -> Vec<usize> {
    let mut points = alignment.to_vec();
    points.sort_unstable();
    points.dedup();
    points
        .windows(2)
        .filter(|w| w[1] - w[0] >= 2)
        .map(|w| (w[0] + w[1]) / 2)
        .collect()
}

/// Summary sentences (in summary order) aligned at or after `boundary`.
pub fn remainder_summary(summary: &[Vec<String>], alignment: &[usize], boundary: usize) -> Vec<Vec<String>> {
    summary
        .iter()
        .zip(alignment)
        .filter(|(_, &a)| a >= boundary)
        .map(|(s, _)| s.clone())
        .collect()
}

pub fn make_remainder_examples(record: &ArticleRecord, alignment: &[usize]) -> Vec<RemainderExample> {
    remainder_boundaries(alignment)
        .into_iter()
        .filter(|&b| b > 0 && b < record.article_sentences.len())
        .map(|boundary| RemainderExample {
            id: format!("{}#{boundary}", record.id),
            source_label: record.source_label,
            boundary,
            read_sentences: record.article_sentences[..boundary].to_vec(),
            remainder_sentences: record.article_sentences[boundary..].to_vec(),
            remainder_summary_sentences: remainder_summary(&record.summary_sentences, alignment, boundary),
        })
        .collect()
}
