//! Scene schema design.
//!
//! Concepts are mined from scene profiles with a language model
//! ([`mine_concepts`]), grown through a hypernym/hyponym lexicon
//! ([`expand_concepts`]) and merged by embedding similarity into the canonical
//! concept set that bounds the graph ([`cluster_concepts`]).

mod lexicon;
mod mining;
mod ontology;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lexicon::LexicalKb;
pub use mining::{build_prompt, mine_concepts, parse_candidates, prompt_key, DEFAULT_TEMPLATE};
pub use ontology::{cluster_concepts, expand_concepts, DEFAULT_GAMMA1, DEFAULT_MAX_DEPTH};

use crate::error::{Error, Result};
use crate::text::{normalize_label, ConceptId};

/// A scene name and the natural-language profiles describing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneProfile {
    pub scene: String,
    pub profiles: Vec<String>,
}

impl SceneProfile {
    pub fn validate(&self) -> Result<()> {
        if self.scene.trim().is_empty() {
            return Err(Error::Precondition("scene name must be non-empty".into()));
        }
        if self.profiles.is_empty() {
            return Err(Error::Precondition("scene profile list is empty".into()));
        }
        if let Some(i) = self.profiles.iter().position(|p| p.trim().is_empty()) {
            return Err(Error::Precondition(format!("scene profile {i} is empty")));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let profile: SceneProfile =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptStage {
    Raw,
    Expanded,
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptProvenance {
    /// Mined from the prompt built for profile `index`.
    Prompt {
        index: usize,
    },
    /// Added as a hypernym of `source`.
    HypernymOf {
        source: ConceptId,
    },
    /// Added as a hyponym of `source`.
    HyponymOf {
        source: ConceptId,
    },
    Merged {
        ids: Vec<ConceptId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub label: String,
    pub stage: ConceptStage,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
    pub provenance: ConceptProvenance,
}

impl Concept {
    pub fn new(
        label: impl Into<String>,
        stage: ConceptStage,
        provenance: ConceptProvenance,
    ) -> Self {
        let label = label.into();
        Concept {
            id: ConceptId::derive(&[&label]),
            label,
            stage,
            aliases: BTreeSet::new(),
            provenance,
        }
    }

    /// Moves the concept forward in the raw → expanded → canonical order.
    pub fn advance(&mut self, stage: ConceptStage) -> Result<()> {
        if stage < self.stage {
            return Err(Error::Contract(format!(
                "concept `{}` cannot move from {:?} back to {:?}",
                self.label, self.stage, stage
            )));
        }
        self.stage = stage;
        Ok(())
    }
}

/// Hypernym edge between two canonical concepts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HypernymEdge {
    pub child: ConceptId,
    pub parent: ConceptId,
}

/// The canonical concept set bounding what knowledge enters the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSchema {
    pub scene: String,
    /// Canonical concepts sorted by label.
    pub concepts: Vec<Concept>,
    pub hierarchy: Vec<HypernymEdge>,
    pub gamma1: f64,
}

impl SceneSchema {
    pub fn empty(scene: impl Into<String>) -> Self {
        SceneSchema {
            scene: scene.into(),
            concepts: Vec::new(),
            hierarchy: Vec::new(),
            gamma1: DEFAULT_GAMMA1,
        }
    }

    /// Builds a schema whose concepts are exactly `labels`, with no merges.
    pub fn from_labels<I, S>(scene: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut concepts: BTreeMap<String, Concept> = BTreeMap::new();
        for (index, l) in labels.into_iter().enumerate() {
            let label = normalize_label(l.as_ref());
            concepts.entry(label.clone()).or_insert_with(|| {
                Concept::new(
                    label,
                    ConceptStage::Canonical,
                    ConceptProvenance::Prompt { index },
                )
            });
        }
        SceneSchema {
            concepts: concepts.into_values().collect(),
            ..SceneSchema::empty(scene)
        }
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.iter().find(|c| &c.id == id)
    }

    /// Resolves a label (canonical or alias) to its canonical concept.
    pub fn resolve(&self, label: &str) -> Option<&Concept> {
        let label = normalize_label(label);
        self.concepts
            .iter()
            .find(|c| c.label == label)
            .or_else(|| self.concepts.iter().find(|c| c.aliases.contains(&label)))
    }

    /// Lookup table from every canonical label and alias to its concept.
    pub fn label_index(&self) -> BTreeMap<&str, &Concept> {
        let mut index = BTreeMap::new();
        for c in &self.concepts {
            for a in &c.aliases {
                index.insert(a.as_str(), c);
            }
        }
        // Canonical labels take precedence over aliases.
        for c in &self.concepts {
            index.insert(c.label.as_str(), c);
        }
        index
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma1) {
            return Err(Error::Integrity(format!(
                "schema gamma1 {} outside [0, 1]",
                self.gamma1
            )));
        }
        let ids: BTreeSet<&ConceptId> = self.concepts.iter().map(|c| &c.id).collect();
        if ids.len() != self.concepts.len() {
            return Err(Error::Integrity("duplicate concept ids in schema".into()));
        }
        for e in &self.hierarchy {
            if !ids.contains(&e.child) || !ids.contains(&e.parent) {
                return Err(Error::Integrity(format!(
                    "hierarchy edge {} -> {} references an unknown concept",
                    e.child, e.parent
                )));
            }
        }
        if has_cycle(&self.hierarchy) {
            return Err(Error::Integrity("schema hierarchy contains a cycle".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: SceneSchema = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }
}

fn reaches(edges: &[HypernymEdge], from: &ConceptId, to: &ConceptId) -> bool {
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(node) = stack.pop() {
        if node == to {
            return true;
        }
        if seen.insert(node) {
            stack.extend(edges.iter().filter(|e| &e.child == node).map(|e| &e.parent));
        }
    }
    false
}

fn has_cycle(edges: &[HypernymEdge]) -> bool {
    edges
        .iter()
        .any(|e| e.child == e.parent || reaches(edges, &e.parent, &e.child))
}
