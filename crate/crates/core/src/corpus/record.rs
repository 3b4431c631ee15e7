use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenization::pretokenize;

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    #[serde(default)]
    pub source: usize,
    pub article: Vec<String>,
    pub summary: Vec<String>,
    #[serde(default)]
    pub entities: BTreeMap<String, String>,
}

/// A tokenized (article, summary) pair with its entity map and source label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArticleRecord {
    pub id: String,
    pub source_label: usize,
    pub article_sentences: Vec<Vec<String>>,
    pub summary_sentences: Vec<Vec<String>>,
    /// Surface mention → entity token.
    pub entity_mentions: BTreeMap<String, String>,
}

fn tokenize_sentences(sentences: &[String]) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| pretokenize(s))
        .filter(|s| !s.is_empty())
        .collect()
}

impl ArticleRecord {
    pub fn from_raw(raw: RawRecord) -> Result<Self> {
        let article_sentences = tokenize_sentences(&raw.article);
        let summary_sentences = tokenize_sentences(&raw.summary);
        if article_sentences.is_empty() {
            return Err(Error::Contract(format!("record {}: empty article", raw.id)));
        }
        if let Some((m, t)) = raw
            .entities
            .iter()
            .find(|(m, t)| m.trim().is_empty() || !crate::tokenization::reserved::is_entity_token(t))
        {
            return Err(Error::Contract(format!(
                "record {}: bad entity mapping {m:?} → {t:?}",
                raw.id
            )));
        }
        Ok(ArticleRecord {
            id: raw.id,
            source_label: raw.source,
            article_sentences,
            summary_sentences,
            entity_mentions: raw.entities,
        })
    }

    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            source: self.source_label,
            article: self.article_sentences.iter().map(|s| s.join(" ")).collect(),
            summary: self.summary_sentences.iter().map(|s| s.join(" ")).collect(),
            entities: self.entity_mentions.clone(),
        }
    }

    pub fn article_tokens(&self) -> Vec<String> {
        self.article_sentences.concat()
    }

    pub fn summary_tokens(&self) -> Vec<String> {
        self.summary_sentences.concat()
    }

    pub fn summary_len(&self) -> usize {
        self.summary_sentences.iter().map(Vec::len).sum()
    }
}

/// Reads newline-delimited JSON records. Blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<ArticleRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push(ArticleRecord::from_raw(raw).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[ArticleRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, &r.to_raw())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_record_parses_and_tokenizes() {
        let line = r#"{"id":"a1","source":1,"article":["John met Mary.","He left."],"summary":["John left."],"entities":{"John":"@entity0"}}"#;
        let raw: RawRecord = serde_json::from_str(line).unwrap();
        let rec = ArticleRecord::from_raw(raw).unwrap();
        assert_eq!(rec.source_label, 1);
        assert_eq!(rec.article_sentences[0], ["John", "met", "Mary", "."]);
        assert_eq!(rec.summary_len(), 3);
    }

    #[test]
    fn bad_entries_are_rejected() {
        let raw = RawRecord {
            id: "x".into(),
            source: 0,
            article: vec!["a".into()],
            summary: vec![],
            entities: BTreeMap::from([("John".to_string(), "person".to_string())]),
        };
        assert!(ArticleRecord::from_raw(raw).is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = std::env::temp_dir().join(format!("ctrlsum-rec-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        fs::write(
            &path,
            "{\"id\":\"a\",\"article\":[\"x\"],\"summary\":[\"x\"]}\n{not json}\n",
        )
        .unwrap();
        match read_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_dir_all(&dir).ok();
    }
}
