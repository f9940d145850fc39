use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Embedder;
use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values without rescaling.
    pub fn raw(values: Vec<f64>) -> Self {
        let norm = l2(&values);
        EmbeddingVector {
            normalized: (norm - 1.0).abs() <= NORM_TOLERANCE,
            values,
        }
    }

    /// Rescales to unit L2 norm. A zero vector stays zero and is not flagged
    /// as normalized.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2(&values);
        if norm > 0.0 && norm.is_finite() {
            values.iter_mut().for_each(|v| *v /= norm);
            EmbeddingVector {
                values,
                normalized: true,
            }
        } else {
            EmbeddingVector {
                values,
                normalized: false,
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity `a·b / (|a||b|)`, or 0 when either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "cosine over mismatched dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    // Adding 0.0 turns -0.0 into 0.0 so orthogonal pairs compare equal under
    // total ordering.
    Ok((dot / (na * nb)).clamp(-1.0, 1.0) + 0.0)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Deterministic offline embedding: lowercased text padded with one space on
/// each side, split into overlapping character trigrams, each trigram hashed
/// (FNV-1a over its UTF-8 bytes) into one of `dimension` buckets, and the
/// bucket counts L2-normalized.
pub fn trigram_embedding(text: &str, dimension: usize) -> EmbeddingVector {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut counts = vec![0.0; dimension];
    let mut buf = String::with_capacity(12);
    for window in padded.windows(3) {
        buf.clear();
        buf.extend(window);
        let bucket = (fnv1a(buf.as_bytes()) % dimension as u64) as usize;
        counts[bucket] += 1.0;
    }
    EmbeddingVector::normalized(counts)
}

/// Embedder over a fixed table of precomputed vectors, e.g. image features
/// computed elsewhere. Vectors are normalized on insertion. Texts missing from
/// the table go to the fallback embedder when one is set.
pub struct StaticEmbedder {
    dimension: usize,
    table: BTreeMap<String, EmbeddingVector>,
    fallback: Option<Box<dyn Embedder>>,
}

impl StaticEmbedder {
    pub fn new(dimension: usize) -> Self {
        StaticEmbedder {
            dimension,
            table: BTreeMap::new(),
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: impl Embedder + 'static) -> Self {
        self.fallback = Some(Box::new(fallback));
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dimension {
            return Err(Error::Contract(format!(
                "injected vector has dimension {}, expected {}",
                values.len(),
                self.dimension
            )));
        }
        self.table
            .insert(text.into(), EmbeddingVector::normalized(values));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Embedder for StaticEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.table.get(text) {
            return Ok(v.clone());
        }
        match &self.fallback {
            Some(f) => f.embed(text),
            None => Err(Error::Config(format!("no injected embedding for `{text}`"))),
        }
    }
}
