//! Dataset ingestion, seeded row sampling, and annotation export.
//!
//! Input data is a flat table of (id, text) rows from CSV or JSON-lines.
//! Stable ids from the source file are preferred over positional ids so that
//! annotation caches survive reordering of the data file.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("column {0:?} not found in input")]
    MissingColumn(String),
    #[error("duplicate row id {0:?}")]
    DuplicateId(String),
    #[error("dataset contains no rows")]
    EmptyDataset,
    #[error("row {0} has empty text")]
    EmptyText(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a dataset from a file. When `id_column` is absent, ids are
/// synthesized as zero-based row indices.
pub fn ingest(
    path: &Path,
    format: DataFormat,
    id_column: Option<&str>,
    text_column: &str,
) -> Result<Dataset, StoreError> {
    let file = File::open(path)?;
    match format {
        DataFormat::Csv => ingest_csv(file, id_column, text_column),
        DataFormat::Jsonl => ingest_jsonl(file, id_column, text_column),
    }
}

/// CSV ingestion from any reader; row order is preserved.
pub fn ingest_csv(
    reader: impl Read,
    id_column: Option<&str>,
    text_column: &str,
) -> Result<Dataset, StoreError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let text_idx = headers
        .iter()
        .position(|h| h == text_column)
        .ok_or_else(|| StoreError::MissingColumn(text_column.to_string()))?;
    let id_idx = match id_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| StoreError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let id = match id_idx {
            Some(idx) => record.get(idx).unwrap_or("").to_string(),
            None => i.to_string(),
        };
        let text = record.get(text_idx).unwrap_or("").to_string();
        rows.push(DataRow { id, text });
    }
    finalize(rows)
}

/// JSON-lines ingestion: one object per line.
pub fn ingest_jsonl(
    reader: impl Read,
    id_column: Option<&str>,
    text_column: &str,
) -> Result<Dataset, StoreError> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| StoreError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        let text = value
            .get(text_column)
            .and_then(|v| v.as_str())
            .ok_or_else(|| StoreError::MissingColumn(text_column.to_string()))?
            .to_string();
        let id = match id_column {
            Some(name) => {
                let v = value
                    .get(name)
                    .ok_or_else(|| StoreError::MissingColumn(name.to_string()))?;
                match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                }
            }
            None => rows.len().to_string(),
        };
        rows.push(DataRow { id, text });
    }
    finalize(rows)
}

fn finalize(rows: Vec<DataRow>) -> Result<Dataset, StoreError> {
    if rows.is_empty() {
        return Err(StoreError::EmptyDataset);
    }
    let mut seen = std::collections::HashSet::new();
    for row in &rows {
        if row.text.is_empty() {
            return Err(StoreError::EmptyText(row.id.clone()));
        }
        if !seen.insert(row.id.clone()) {
            return Err(StoreError::DuplicateId(row.id.clone()));
        }
    }
    Ok(Dataset { rows })
}

/// Uniform sample of `n` rows without replacement, deterministic per seed.
/// Original row order is preserved; `n >= len` returns the whole dataset.
pub fn sample(data: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= data.rows.len() {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = rand::seq::index::sample(&mut rng, data.rows.len(), n).into_vec();
    indices.sort_unstable();
    Dataset {
        rows: indices.into_iter().map(|i| data.rows[i].clone()).collect(),
    }
}

/// Which of the two run layouts a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Intra,
    Inter,
}

/// Coder provenance: an iteration of one fixed prompt, or one prompt variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoderContext {
    Iteration { iteration: u32 },
    Variant {
        prompt_id: String,
        prompt: String,
        original: bool,
        temperature: f64,
    },
}

impl CoderContext {
    /// Stable id for cache keys and table coder axes.
    pub fn coder_id(&self) -> String {
        match self {
            CoderContext::Iteration { iteration } => format!("iter-{iteration}"),
            CoderContext::Variant { prompt_id, .. } => prompt_id.clone(),
        }
    }
}

/// One (unit, coder, label) observation with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub row_id: String,
    pub text: String,
    /// Verbatim backend reply.
    pub raw_reply: String,
    /// Parsed label token.
    pub label: String,
    pub context: CoderContext,
    pub run_id: String,
    pub timestamp: chrono::DateTime<chrono::Utc>,
}

/// Writes records in the flat per-run CSV layout. Intra columns:
/// `id,text,annotation,iteration`; inter columns:
/// `id,text,annotation,prompt_id,prompt,original,temperature`.
pub fn export_csv(
    records: &[AnnotationRecord],
    kind: RunKind,
    writer: impl Write,
) -> Result<(), StoreError> {
    let mut wtr = csv::Writer::from_writer(writer);
    match kind {
        RunKind::Intra => {
            wtr.write_record(["id", "text", "annotation", "iteration"])?;
            for r in records {
                let iteration = match &r.context {
                    CoderContext::Iteration { iteration } => iteration.to_string(),
                    CoderContext::Variant { .. } => String::new(),
                };
                wtr.write_record([&r.row_id, &r.text, &r.label, &iteration])?;
            }
        }
        RunKind::Inter => {
            wtr.write_record([
                "id",
                "text",
                "annotation",
                "prompt_id",
                "prompt",
                "original",
                "temperature",
            ])?;
            for r in records {
                if let CoderContext::Variant {
                    prompt_id,
                    prompt,
                    original,
                    temperature,
                } = &r.context
                {
                    wtr.write_record([
                        &r.row_id,
                        &r.text,
                        &r.label,
                        prompt_id,
                        prompt,
                        &(u8::from(*original)).to_string(),
                        &format_temperature(*temperature),
                    ])?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_csv_file(
    records: &[AnnotationRecord],
    kind: RunKind,
    path: &Path,
) -> Result<(), StoreError> {
    export_csv(records, kind, File::create(path)?)
}

/// Temperatures print with at least one decimal ("1.0", "0.5", "2.25").
pub fn format_temperature(t: f64) -> String {
    if t == t.trunc() {
        format!("{t:.1}")
    } else {
        format!("{t}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn csv_bytes(s: &str) -> std::io::Cursor<Vec<u8>> {
        std::io::Cursor::new(s.as_bytes().to_vec())
    }

    #[test]
    fn ingest_basic_csv() {
        let d = ingest_csv(csv_bytes("id,text\na,hello\nb,world\nc,again\n"), Some("id"), "text")
            .unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows[0].id, "a");
        assert_eq!(d.rows[2].text, "again");
    }

    #[test]
    fn ingest_missing_text_column() {
        let err = ingest_csv(csv_bytes("id,body\na,hello\n"), Some("id"), "text").unwrap_err();
        assert!(matches!(err, StoreError::MissingColumn(c) if c == "text"));
    }

    #[test]
    fn ingest_synthesizes_positional_ids() {
        let d = ingest_csv(csv_bytes("text\nx\ny\n"), None, "text").unwrap();
        assert_eq!(d.rows[0].id, "0");
        assert_eq!(d.rows[1].id, "1");
    }

    #[test]
    fn ingest_jsonl_duplicate_ids() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        let err = ingest_jsonl(csv_bytes(input), Some("id"), "text").unwrap_err();
        assert!(matches!(err, StoreError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn ingest_empty_dataset() {
        let err = ingest_csv(csv_bytes("id,text\n"), Some("id"), "text").unwrap_err();
        assert!(matches!(err, StoreError::EmptyDataset));
    }

    fn dataset(n: usize) -> Dataset {
        Dataset {
            rows: (0..n)
                .map(|i| DataRow {
                    id: format!("r{i}"),
                    text: format!("text {i}"),
                })
                .collect(),
        }
    }

    #[test]
    fn sample_is_identity_when_n_covers_all() {
        let d = dataset(100);
        assert_eq!(sample(&d, 100, 7), d);
        assert_eq!(sample(&d, 500, 7), d);
    }

    #[test]
    fn sample_is_deterministic() {
        let d = dataset(500);
        assert_eq!(sample(&d, 50, 11), sample(&d, 50, 11));
    }

    #[test]
    fn sample_draws_distinct_rows_in_order() {
        let d = dataset(5000);
        let s = sample(&d, 100, 3);
        assert_eq!(s.len(), 100);
        let ids: std::collections::HashSet<_> = s.rows.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), 100);
        // Source order preserved.
        let positions: Vec<usize> = s
            .rows
            .iter()
            .map(|r| r.id[1..].parse::<usize>().unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    fn record(context: CoderContext) -> AnnotationRecord {
        AnnotationRecord {
            row_id: "r1".into(),
            text: "some, \"quoted\"\ntext".into(),
            raw_reply: " 1\n".into(),
            label: "1".into(),
            context,
            run_id: "run".into(),
            timestamp: chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn export_intra_layout() {
        let mut out = Vec::new();
        export_csv(
            &[record(CoderContext::Iteration { iteration: 3 })],
            RunKind::Intra,
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("id,text,annotation,iteration\n"));
        assert!(text.contains(",3\n"));
    }

    #[test]
    fn export_empty_is_header_only() {
        let mut out = Vec::new();
        export_csv(&[], RunKind::Inter, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "id,text,annotation,prompt_id,prompt,original,temperature\n"
        );
    }

    #[test]
    fn export_ingest_round_trip() {
        let rec = record(CoderContext::Iteration { iteration: 1 });
        let mut out = Vec::new();
        export_csv(&[rec.clone()], RunKind::Intra, &mut out).unwrap();
        let d = ingest_csv(std::io::Cursor::new(out), Some("id"), "text").unwrap();
        assert_eq!(d.rows[0].id, rec.row_id);
        assert_eq!(d.rows[0].text, rec.text);
    }

    #[test]
    fn inter_export_encodes_original_flag() {
        let rec = record(CoderContext::Variant {
            prompt_id: "t0.5-v0".into(),
            prompt: "variant text".into(),
            original: true,
            temperature: 0.5,
        });
        let mut out = Vec::new();
        export_csv(&[rec], RunKind::Inter, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains(",1,0.5\n"));
    }
}
