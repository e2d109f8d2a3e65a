//! Persistent annotation cache.
//!
//! Append-only JSON-lines file, one record per annotated cell, keyed by
//! (row id, hash of the full prompt, iteration-or-variant id, annotator
//! name). A resumed run replays stored replies and issues zero backend calls
//! for cells already present. Only replies that parse under the run's output
//! schema are stored, so a cached garbage reply can never starve the retry
//! loop.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_label, AnnotateError, AnnotationRequest, Annotator, OutputSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub row_id: String,
    pub prompt_hash: String,
    pub context_id: String,
    pub annotator: String,
    pub raw_reply: String,
    pub label: String,
    pub timestamp: chrono::DateTime<chrono::Utc>,
}

/// Parses one JSON-lines cache record. Exposed for the fuzz targets.
pub fn parse_cache_line(line: &str) -> Result<CacheRecord, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn prompt_hash(full_prompt: &str) -> String {
    let digest = Sha256::digest(full_prompt.as_bytes());
    // 16 hex chars is plenty for a per-run prompt namespace.
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

type Key = (String, String, String, String);

fn key_of(record: &CacheRecord) -> Key {
    (
        record.row_id.clone(),
        record.prompt_hash.clone(),
        record.context_id.clone(),
        record.annotator.clone(),
    )
}

/// On-disk cell store shared by all workers of a run.
pub struct CacheStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

struct Inner {
    entries: HashMap<Key, CacheRecord>,
    file: File,
}

impl CacheStore {
    /// Opens (or creates) the cache file and loads every existing record.
    pub fn open(path: &Path) -> Result<Self, AnnotateError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| AnnotateError::CacheIo(e.to_string()))?;
        let mut entries = HashMap::new();
        let reader = BufReader::new(
            File::open(path).map_err(|e| AnnotateError::CacheIo(e.to_string()))?,
        );
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AnnotateError::CacheIo(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_cache_line(&line).map_err(|e| AnnotateError::CacheCorrupt {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.insert(key_of(&record), record);
        }
        Ok(Self {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner { entries, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &Key) -> Option<CacheRecord> {
        self.inner.lock().unwrap().entries.get(key).cloned()
    }

    /// Appends the record to the file and the in-memory index. Last write
    /// wins on identical keys; values are deterministic per key, so the race
    /// is benign.
    pub fn put(&self, record: CacheRecord) -> Result<(), AnnotateError> {
        let mut inner = self.inner.lock().unwrap();
        let line = serde_json::to_string(&record)
            .map_err(|e| AnnotateError::CacheIo(e.to_string()))?;
        writeln!(inner.file, "{line}").map_err(|e| AnnotateError::CacheIo(e.to_string()))?;
        inner.entries.insert(key_of(&record), record);
        Ok(())
    }
}

/// Memoizing wrapper around any annotator.
pub struct CachedAnnotator<'a> {
    inner: &'a dyn Annotator,
    store: &'a CacheStore,
    schema: OutputSchema,
}

impl<'a> CachedAnnotator<'a> {
    pub fn new(inner: &'a dyn Annotator, store: &'a CacheStore, schema: OutputSchema) -> Self {
        Self {
            inner,
            store,
            schema,
        }
    }
}

impl Annotator for CachedAnnotator<'_> {
    fn annotate(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        let key: Key = (
            req.row_id.to_string(),
            prompt_hash(req.full_prompt),
            req.context_id.to_string(),
            self.inner.name().to_string(),
        );
        if let Some(hit) = self.store.get(&key) {
            return Ok(hit.raw_reply);
        }
        let raw = self.inner.annotate(req)?;
        if let Ok(label) = parse_label(&raw, &self.schema) {
            self.store.put(CacheRecord {
                row_id: key.0,
                prompt_hash: key.1,
                context_id: key.2,
                annotator: key.3,
                raw_reply: raw.clone(),
                label: label.raw,
                timestamp: chrono::Utc::now(),
            })?;
        }
        Ok(raw)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn max_parallelism(&self) -> usize {
        self.inner.max_parallelism()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: AtomicUsize,
    }

    impl Annotator for Counting {
        fn annotate(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(if req.row_id.len() % 2 == 0 { "0" } else { "1" }.to_string())
        }
        fn name(&self) -> &str {
            "counting"
        }
    }

    fn schema() -> OutputSchema {
        OutputSchema::Categorical {
            allowed: vec!["0".into(), "1".into()],
        }
    }

    #[test]
    fn second_run_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let backend = Counting {
            calls: AtomicUsize::new(0),
        };

        let store = CacheStore::open(&path).unwrap();
        let cached = CachedAnnotator::new(&backend, &store, schema());
        for i in 0..20 {
            let row = format!("row-{i}");
            cached
                .annotate(&AnnotationRequest {
                    row_id: &row,
                    text: "t",
                    full_prompt: "p",
                    context_id: "iter-1",
                })
                .unwrap();
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 20);
        drop(cached);
        drop(store);

        // Fresh store over the same file: all hits.
        let store = CacheStore::open(&path).unwrap();
        assert_eq!(store.len(), 20);
        let cached = CachedAnnotator::new(&backend, &store, schema());
        for i in 0..20 {
            let row = format!("row-{i}");
            cached
                .annotate(&AnnotationRequest {
                    row_id: &row,
                    text: "t",
                    full_prompt: "p",
                    context_id: "iter-1",
                })
                .unwrap();
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 20);
    }

    #[test]
    fn changed_prompt_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let backend = Counting {
            calls: AtomicUsize::new(0),
        };
        let store = CacheStore::open(&path).unwrap();
        let cached = CachedAnnotator::new(&backend, &store, schema());
        let mut req = AnnotationRequest {
            row_id: "r",
            text: "t",
            full_prompt: "prompt one",
            context_id: "iter-1",
        };
        cached.annotate(&req).unwrap();
        req.full_prompt = "prompt two";
        cached.annotate(&req).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn corrupt_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{not json\n").unwrap();
        match CacheStore::open(&path) {
            Err(AnnotateError::CacheCorrupt { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected CacheCorrupt, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn cache_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let backend = Counting {
            calls: AtomicUsize::new(0),
        };
        let store = CacheStore::open(&path).unwrap();
        let cached = CachedAnnotator::new(&backend, &store, schema());
        for i in 0..10 {
            let row = format!("row-{i}");
            let req = AnnotationRequest {
                row_id: &row,
                text: "t",
                full_prompt: "p",
                context_id: "iter-1",
            };
            let direct = backend.annotate(&req).unwrap();
            let via_cache = cached.annotate(&req).unwrap();
            assert_eq!(direct, via_cache);
        }
    }
}
