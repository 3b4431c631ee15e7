use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::rouge::{rouge, RougeScore, RougeVariant};
use crate::error::{Error, Result};
use crate::numeric::Real;

/// The first three sentences, or all of them when there are fewer.
pub fn lead3(article: &[Vec<String>]) -> Vec<Vec<String>> {
    article.iter().take(3).cloned().collect()
}

/// Fraction of decodes containing the entity token requested for them.
pub fn entity_occurrence_rate<'a, I>(pairs: I) -> Result<Real>
where
    I: IntoIterator<Item = (&'a [String], &'a str)>,
{
    let mut hits = 0usize;
    let mut total = 0usize;
    for (decode, requested) in pairs {
        total += 1;
        if decode.iter().any(|t| t == requested) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("entity requests"));
    }
    Ok(hits as Real / total as Real)
}

fn ranks(values: &[Real]) -> Vec<Real> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as Real / 2.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. None when either side
/// is constant or the lengths differ.
pub fn spearman(x: &[Real], y: &[Real]) -> Option<Real> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as Real;
    let (mx, my) = (rx.iter().sum::<Real>() / n, ry.iter().sum::<Real>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Mean output length per bin. `decode_len(item, bin)` decodes one eval item
/// with the given length marker and returns its length in words.
pub fn length_response_curve<F>(num_items: usize, num_bins: usize, mut decode_len: F) -> Result<Vec<Real>>
where
    F: FnMut(usize, usize) -> Result<usize>,
{
    if num_items == 0 {
        return Err(Error::Empty("length-curve items"));
    }
    let mut curve = Vec::with_capacity(num_bins);
    for bin in 0..num_bins {
        let mut total = 0usize;
        for item in 0..num_items {
            total += decode_len(item, bin)?;
        }
        curve.push(total as Real / num_items as Real);
    }
    Ok(curve)
}

/// `bin<TAB>mean_length` lines.
pub fn format_curve(curve: &[Real]) -> String {
    let mut out = String::from("bin\tmean_length\n");
    for (b, v) in curve.iter().enumerate() {
        let _ = writeln!(out, "{b}\t{v:.4}");
    }
    out
}

/// Mean per-document scores for ROUGE-1, ROUGE-2 and ROUGE-L.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusRouge {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub count: usize,
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn mean_scores(scores: &[RougeScore]) -> RougeScore {
    let n = scores.len() as Real;
    RougeScore {
        precision: scores.iter().map(|s| s.precision).sum::<Real>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<Real>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<Real>() / n,
    }
}

/// Unweighted mean over documents of lowercased token-level ROUGE.
pub fn corpus_eval(decodes: &[Vec<String>], references: &[Vec<String>]) -> Result<CorpusRouge> {
    if decodes.len() != references.len() {
        return Err(Error::Contract(format!(
            "{} decodes for {} references",
            decodes.len(),
            references.len()
        )));
    }
    if decodes.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let mut per = [Vec::new(), Vec::new(), Vec::new()];
    for (d, r) in decodes.iter().zip(references) {
        let (d, r) = (lower(d), lower(r));
        for (slot, v) in per
            .iter_mut()
            .zip([RougeVariant::N(1), RougeVariant::N(2), RougeVariant::L])
        {
            slot.push(rouge(&d, &r, v));
        }
    }
    Ok(CorpusRouge {
        rouge1: mean_scores(&per[0]),
        rouge2: mean_scores(&per[1]),
        rouge_l: mean_scores(&per[2]),
        count: decodes.len(),
    })
}

/// Tab-separated `metric value count` table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<(String, Real, usize)>,
}

impl EvalReport {
    pub fn push(&mut self, metric: impl Into<String>, value: Real, count: usize) {
        self.rows.push((metric.into(), value, count));
    }

    pub fn add_corpus(&mut self, prefix: &str, scores: &CorpusRouge) {
        for (name, s) in [
            ("rouge1", scores.rouge1),
            ("rouge2", scores.rouge2),
            ("rougeL", scores.rouge_l),
        ] {
            self.push(format!("{prefix}{name}_f1"), s.f1, scores.count);
            self.push(format!("{prefix}{name}_p"), s.precision, scores.count);
            self.push(format!("{prefix}{name}_r"), s.recall, scores.count);
        }
    }

    pub fn get(&self, metric: &str) -> Option<Real> {
        self.rows.iter().find(|r| r.0 == metric).map(|r| r.1)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\tcount\n");
        for (m, v, c) in &self.rows {
            let _ = writeln!(out, "{m}\t{v:.6}\t{c}");
        }
        out
    }
}
