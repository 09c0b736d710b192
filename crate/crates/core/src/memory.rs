//! Episodic and operation memory with label-based vector retrieval.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bus::Structured;

pub const EMBEDDING_DIM: usize = 256;
pub const SALIENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_KEYWORDS: [&str; 8] = [
    "fire",
    "smoke",
    "survivor",
    "trapped",
    "fault",
    "helipad",
    "building",
    "firefighter",
];

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("record label must not be empty")]
    EmptyLabel,
    #[error("salience {0} is outside [0, 1]")]
    Salience(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn bucket(token: &str) -> usize {
    (fnv1a(token) % EMBEDDING_DIM as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// Unit vector, or all zeros for text without tokens.
    pub vector: Vec<f64>,
    /// L2 norm of the raw bucket counts.
    pub norm: f64,
}

impl Embedding {
    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Hashed bag-of-tokens embedding.
pub fn embed(text: &str) -> Embedding {
    let mut counts = vec![0.0f64; EMBEDDING_DIM];
    for token in tokenize(text) {
        counts[bucket(&token)] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut counts {
            *c /= norm;
        }
    }
    Embedding {
        vector: counts,
        norm,
    }
}

pub fn cosine(a: &str, b: &str) -> f64 {
    embed(a).cosine(&embed(b))
}

/// Image text and/or structured scene attached to an episodic record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultimodalPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Structured>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub label: String,
    pub payload: MultimodalPayload,
    pub tick: u64,
    pub salience: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Accepted,
    Rejected(String),
    ServiceResult(String),
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        !matches!(self, Outcome::Rejected(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub tick: u64,
    /// `None` when the step failed before an operation was chosen.
    pub operation: Option<String>,
    pub config: Structured,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub id: usize,
    pub label: String,
    pub payload: MultimodalPayload,
    pub tick: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub records: Vec<RetrievedRecord>,
}

impl RetrievalResult {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Stored {
    record: EpisodicRecord,
    embedding: Embedding,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DumpLine {
    Episodic(EpisodicRecord),
    Operation(OperationRecord),
}

/// Ranking key: higher similarity first, then newer (larger id) first.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    similarity: f64,
    id: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // "Greater" means ranked earlier.
    fn cmp(&self, other: &Self) -> Ordering {
        self.similarity
            .total_cmp(&other.similarity)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct MemoryDb {
    episodic: Vec<Stored>,
    operations: Vec<OperationRecord>,
    keywords: BTreeSet<String>,
    last_label: Option<String>,
}

impl Default for MemoryDb {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryDb {
    pub fn new() -> Self {
        Self {
            episodic: Vec::new(),
            operations: Vec::new(),
            keywords: DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect(),
            last_label: None,
        }
    }

    pub fn with_keywords<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.register_keywords(extra);
        self
    }

    pub fn register_keywords<I, S>(&mut self, extra: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for k in extra {
            self.keywords.extend(tokenize(k.as_ref()));
        }
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.episodic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodic.is_empty()
    }

    pub fn episodic(&self) -> impl Iterator<Item = &EpisodicRecord> {
        self.episodic.iter().map(|s| &s.record)
    }

    pub fn operations(&self) -> &[OperationRecord] {
        &self.operations
    }

    pub fn insert_episodic(&mut self, record: EpisodicRecord) -> Result<usize, MemoryError> {
        if record.label.trim().is_empty() {
            return Err(MemoryError::EmptyLabel);
        }
        if !(0.0..=1.0).contains(&record.salience) {
            return Err(MemoryError::Salience(record.salience));
        }
        let embedding = embed(&record.label);
        self.last_label = Some(record.label.clone());
        self.episodic.push(Stored { record, embedding });
        Ok(self.episodic.len() - 1)
    }

    pub fn salience(&self, narrative: &str) -> f64 {
        if tokenize(narrative).any(|t| self.keywords.contains(&t)) {
            1.0
        } else {
            0.0
        }
    }

    /// Stores the observation under `narrative` if it is salient and differs
    /// from the previously stored label.
    pub fn reflect(
        &mut self,
        observation: MultimodalPayload,
        narrative: &str,
        tick: u64,
    ) -> Option<usize> {
        let salience = self.salience(narrative);
        if salience < SALIENCE_THRESHOLD || self.last_label.as_deref() == Some(narrative) {
            return None;
        }
        self.insert_episodic(EpisodicRecord {
            label: narrative.to_string(),
            payload: observation,
            tick,
            salience,
        })
        .ok()
    }

    /// Top-`k` records by cosine similarity to `query`, newer first on ties.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<RetrievalResult, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        let q = embed(query);
        // Min-heap of the best k seen so far.
        let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (id, stored) in self.episodic.iter().enumerate() {
            let r = Ranked {
                similarity: q.cosine(&stored.embedding),
                id,
            };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(r));
            } else if let Some(min) = heap.peek() {
                if r > min.0 {
                    heap.pop();
                    heap.push(std::cmp::Reverse(r));
                }
            }
        }
        let mut ranked: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
        ranked.sort_by(|a, b| b.cmp(a));
        Ok(RetrievalResult {
            query: query.to_string(),
            records: ranked
                .into_iter()
                .map(|r| {
                    let rec = &self.episodic[r.id].record;
                    RetrievedRecord {
                        id: r.id,
                        label: rec.label.clone(),
                        payload: rec.payload.clone(),
                        tick: rec.tick,
                        similarity: r.similarity,
                    }
                })
                .collect(),
        })
    }

    pub fn record_operation(&mut self, record: OperationRecord) {
        self.operations.push(record);
    }

    /// Last `n` operation records, oldest first.
    pub fn recent_operations(&self, n: usize) -> &[OperationRecord] {
        &self.operations[self.operations.len().saturating_sub(n)..]
    }

    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> Result<(), MemoryError> {
        let write = |out: &mut W, line: &DumpLine| -> Result<(), MemoryError> {
            let text = serde_json::to_string(line)
                .map_err(|e| MemoryError::Parse { line: 0, source: e })?;
            writeln!(out, "{text}")?;
            Ok(())
        };
        for s in &self.episodic {
            write(&mut out, &DumpLine::Episodic(s.record.clone()))?;
        }
        for op in &self.operations {
            write(&mut out, &DumpLine::Operation(op.clone()))?;
        }
        Ok(())
    }

    /// Rebuilds a database from a dump; keywords come from `self`.
    pub fn load_jsonl<R: BufRead>(&self, input: R) -> Result<MemoryDb, MemoryError> {
        let mut db = MemoryDb {
            keywords: self.keywords.clone(),
            ..MemoryDb::new()
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DumpLine = serde_json::from_str(&line).map_err(|e| MemoryError::Parse {
                line: i + 1,
                source: e,
            })?;
            match parsed {
                DumpLine::Episodic(r) => {
                    db.insert_episodic(r)?;
                }
                DumpLine::Operation(op) => db.record_operation(op),
            }
        }
        Ok(db)
    }
}
