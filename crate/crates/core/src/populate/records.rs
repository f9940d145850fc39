use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{ImageKind, Source};
use crate::text::normalize_label;

/// Image payload of a scene record. `kind` is optional on the wire only so a
/// missing kind can be rejected per record instead of failing the whole file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDescriptor {
    pub uri: String,
    #[serde(default)]
    pub kind: Option<ImageKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTail {
    /// Names another thing; becomes an entity when it resolves in the schema.
    Label(String),
    Literal(String),
    Image(ImageDescriptor),
}

/// One ingest line: `{"head", "relation", "tail", "source_id", "source_kind"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub head: String,
    pub relation: String,
    pub tail: SourceTail,
    pub source_id: String,
    pub source_kind: Source,
}

/// A record refused at ingest, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub record: serde_json::Value,
    pub reason: String,
}

impl Reject {
    pub fn of(record: &SourceRecord, reason: impl Into<String>) -> Self {
        Reject {
            line: None,
            record: serde_json::to_value(record).expect("record serializes"),
            reason: reason.into(),
        }
    }
}

/// Parses an ingest JSONL file. Lines are parsed in parallel; malformed lines
/// become rejects and never abort the stream.
pub fn read_records(path: &Path) -> Result<(Vec<SourceRecord>, Vec<Reject>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_records(&text))
}

pub fn parse_records(text: &str) -> (Vec<SourceRecord>, Vec<Reject>) {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let parsed: Vec<std::result::Result<SourceRecord, Reject>> = lines
        .par_iter()
        .map(|&(i, line)| {
            serde_json::from_str::<SourceRecord>(line).map_err(|e| Reject {
                line: Some(i + 1),
                record: serde_json::from_str(line)
                    .unwrap_or_else(|_| serde_json::Value::String(line.to_string())),
                reason: format!("malformed record: {e}"),
            })
        })
        .collect();
    let mut records = Vec::with_capacity(parsed.len());
    let mut rejects = Vec::new();
    for p in parsed {
        match p {
            Ok(r) => records.push(r),
            Err(r) => rejects.push(r),
        }
    }
    (records, rejects)
}

pub fn write_rejects(rejects: &[Reject]) -> String {
    let mut out = String::new();
    for r in rejects {
        out.push_str(&serde_json::to_string(r).expect("reject serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// At most one tail per head; the locus of source conflicts.
    Functional,
    MultiValued,
}

/// Per-relation cardinality. Undeclared relations are multi-valued.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationPolicy {
    kinds: BTreeMap<String, RelationKind>,
}

impl RelationPolicy {
    pub fn new(entries: impl IntoIterator<Item = (String, RelationKind)>) -> Self {
        RelationPolicy {
            kinds: entries
                .into_iter()
                .map(|(r, k)| (normalize_label(&r), k))
                .collect(),
        }
    }

    pub fn functional(relations: &[&str]) -> Self {
        RelationPolicy::new(
            relations
                .iter()
                .map(|r| (r.to_string(), RelationKind::Functional)),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, RelationKind> =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(RelationPolicy::new(raw))
    }

    pub fn kind(&self, relation: &str) -> RelationKind {
        self.kinds
            .get(relation)
            .copied()
            .unwrap_or(RelationKind::MultiValued)
    }

    pub fn is_functional(&self, relation: &str) -> bool {
        self.kind(relation) == RelationKind::Functional
    }
}
