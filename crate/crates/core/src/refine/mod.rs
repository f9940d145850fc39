//! Quality control and refinement of attribute knowledge.
//!
//! Composite attributes ("frame length") are split into part nodes carrying
//! general attributes, near-synonymous attribute names are merged into one
//! canonical key, and the long tail of attribute usage is summarized as a
//! cumulative distribution.

mod cdf;
mod hierarchy;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cdf::{attribute_cdf, attribute_frequencies, cdf_from_frequencies, CdfPoint, CdfSeries};
pub use hierarchy::{
    hierarchicalize, subdivide, HierarchicalAttributeSet, HierarchyElement, PartLexicon,
    Subdivision,
};

use crate::cluster::{check_threshold, merge_labels, no_hypernyms, MergeCluster};
use crate::error::{Error, Result};
use crate::kg::{AttributeKey, AttributeLevel, BuildRecord, Entity, SceneMmkg, Tail, Triple};
use crate::providers::Embedder;
use crate::text::{AttributeId, EntityId};

pub const DEFAULT_GAMMA2: f64 = 0.7;

/// Relation linking an entity to one of its part nodes.
pub const HAS_PART: &str = "has part";

/// Result of merging attribute names by similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeAggregation {
    pub clusters: Vec<MergeCluster>,
    /// Every input key mapped to its canonical key (canonical keys map to
    /// themselves).
    pub canonical_of: BTreeMap<String, String>,
    pub merges: usize,
}

impl AttributeAggregation {
    pub fn aliases(&self) -> impl Iterator<Item = (&str, &str)> {
        self.canonical_of
            .iter()
            .filter(|(k, v)| k != v)
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Merges attribute names whose embeddings reach `gamma2`, using the same
/// fixpoint as concept clustering (without the hypernym preference).
pub fn aggregate_attributes<E: Embedder + ?Sized>(
    keys: impl IntoIterator<Item = String>,
    gamma2: f64,
    embedder: &E,
) -> Result<AttributeAggregation> {
    let outcome = merge_labels(keys, gamma2, embedder, &no_hypernyms)?;
    let canonical_of = outcome
        .clusters
        .iter()
        .flat_map(|c| {
            c.members
                .iter()
                .map(move |m| (m.clone(), c.canonical.clone()))
        })
        .collect();
    Ok(AttributeAggregation {
        clusters: outcome.clusters,
        canonical_of,
        merges: outcome.merges,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub edges: usize,
    pub distinct_attributes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcrReport {
    pub gamma2: f64,
    pub edges_before: usize,
    pub edges_after: usize,
    pub distinct_attrs_before: usize,
    pub distinct_attrs_after: usize,
    /// Counts between hierarchicalization and aggregation.
    pub hierarchicalized: StageSummary,
    pub composites_subdivided: usize,
    pub parts_created: usize,
    pub attribute_merges: usize,
    pub cdf_before: CdfSeries,
    pub cdf_hierarchicalized: CdfSeries,
    pub cdf_after: CdfSeries,
}

impl QcrReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A graph sharing `graph`'s schema, entities and assets but no triples.
fn shell(graph: &SceneMmkg) -> SceneMmkg {
    let mut out = SceneMmkg::new(graph.schema.clone());
    out.entities = graph.entities.clone();
    out.assets = graph.assets.clone();
    out.build_log = graph.build_log.clone();
    out
}

fn note_level(levels: &mut BTreeMap<String, AttributeLevel>, name: &str, level: AttributeLevel) {
    let slot = levels.entry(name.to_string()).or_insert(level);
    *slot = (*slot).min(level);
}

/// Hierarchicalizes every entity's attributes, then aggregates attribute
/// names at `gamma2`. Returns a new frozen graph; the input is untouched.
pub fn qcr<E: Embedder + ?Sized>(
    graph: &SceneMmkg,
    lex: &PartLexicon,
    gamma2: f64,
    embedder: &E,
) -> Result<(SceneMmkg, QcrReport)> {
    check_threshold(gamma2)?;
    if !graph.is_frozen() {
        return Err(Error::Precondition(
            "refinement expects a frozen graph".into(),
        ));
    }
    let before = graph.stats();
    let cdf_before = attribute_cdf(graph);

    // Attribute name of a triple, resolved through existing aliases.
    let attribute_of = |t: &Triple| -> Result<Option<String>> {
        if !graph.is_attribute(&t.relation) {
            return Ok(None);
        }
        Ok(Some(graph.canonical_attribute(&t.relation)?.name.clone()))
    };

    let mut per_entity: BTreeMap<&EntityId, BTreeSet<String>> = BTreeMap::new();
    for t in graph.triples() {
        let top_level = graph.entity(&t.head).is_some_and(|e| e.part_of.is_none());
        if let (true, Some(name)) = (top_level, attribute_of(t)?) {
            per_entity.entry(&t.head).or_default().insert(name);
        }
    }
    let sets: BTreeMap<&EntityId, HierarchicalAttributeSet> = per_entity
        .into_par_iter()
        .map(|(id, attrs)| {
            let label = graph.entities[id].label.as_str();
            (id, hierarchicalize(label, attrs, lex))
        })
        .collect();

    // Step 1: rewrite composite attribute triples onto part nodes.
    let mut staged = shell(graph);
    let mut levels: BTreeMap<String, AttributeLevel> = BTreeMap::new();
    let mut parts_created = BTreeSet::new();
    for t in graph.triples() {
        let Some(name) = attribute_of(t)? else {
            staged.add_triple(t.clone())?;
            continue;
        };
        let split = sets.get(&t.head).and_then(|s| s.composites.get(&name));
        let Some(sub) = split else {
            let level = match graph.entities[&t.head].part_of {
                None => AttributeLevel::EntityLevel,
                Some(_) => AttributeLevel::PartLevel,
            };
            note_level(&mut levels, &name, level);
            staged.add_triple(Triple {
                relation: name,
                ..t.clone()
            })?;
            continue;
        };
        let parent = graph.entities[&t.head].clone();
        for p in &sub.parts {
            let part = staged.add_entity(Entity::part(&parent, p))?;
            parts_created.insert(part.clone());
            staged.add_triple(Triple {
                head: parent.id.clone(),
                relation: HAS_PART.to_string(),
                tail: Tail::Entity(part.clone()),
                source: t.source,
                provenance: t.provenance.clone(),
            })?;
            for a in &sub.attributes {
                note_level(&mut levels, a, AttributeLevel::PartLevel);
                staged.add_triple(Triple {
                    head: part.clone(),
                    relation: a.clone(),
                    tail: t.tail.clone(),
                    source: t.source,
                    provenance: t.provenance.clone(),
                })?;
            }
        }
    }
    for (name, level) in &levels {
        staged.add_attribute_key(AttributeKey::canonical(name, *level))?;
    }
    let hierarchicalized = StageSummary {
        edges: staged.triples.len(),
        distinct_attributes: levels.len(),
    };
    let cdf_hierarchicalized = attribute_cdf(&staged);

    // Step 2: merge similar attribute names and rewrite triples onto the
    // surviving key.
    let aggregation = aggregate_attributes(levels.keys().cloned(), gamma2, embedder)?;
    let mut refined = shell(&staged);
    for t in staged.triples() {
        let relation = aggregation
            .canonical_of
            .get(&t.relation)
            .cloned()
            .unwrap_or_else(|| t.relation.clone());
        refined.add_triple(Triple {
            relation,
            ..t.clone()
        })?;
    }
    for cluster in &aggregation.clusters {
        let level = cluster
            .members
            .iter()
            .map(|m| levels[m])
            .min()
            .expect("cluster nonempty");
        let canonical = AttributeKey::canonical(&cluster.canonical, level);
        let target = canonical.id.clone();
        refined.add_attribute_key(canonical)?;
        for alias in cluster.aliases() {
            refined.add_attribute_key(alias_key(alias, level, &target))?;
        }
    }
    // Aliases recorded by an earlier refinement keep resolving when their
    // target survived.
    for key in graph.attribute_keys().filter(|k| !k.canonical) {
        if refined.is_attribute(&key.name) {
            continue;
        }
        let old_target = graph.canonical_attribute(&key.name)?.name.clone();
        if let Some(new_target) = aggregation.canonical_of.get(&old_target) {
            let target = refined.attribute_key(new_target).expect("registered above");
            let (level, id) = (target.level, target.id.clone());
            refined.add_attribute_key(alias_key(&key.name, level, &id))?;
        }
    }

    let after = refined.stats();
    let report = QcrReport {
        gamma2,
        edges_before: before.edges,
        edges_after: after.edges,
        distinct_attrs_before: before.distinct_attributes,
        distinct_attrs_after: after.distinct_attributes,
        hierarchicalized,
        composites_subdivided: sets.values().map(|s| s.composites.len()).sum(),
        parts_created: parts_created.len(),
        attribute_merges: aggregation.merges,
        cdf_before,
        cdf_hierarchicalized,
        cdf_after: attribute_cdf(&refined),
    };
    refined.log_stage(
        BuildRecord::new("qcr")
            .count("edges_before", report.edges_before)
            .count("edges_after", report.edges_after)
            .count("distinct_attrs_before", report.distinct_attrs_before)
            .count("distinct_attrs_after", report.distinct_attrs_after)
            .count("parts_created", report.parts_created)
            .count("attribute_merges", report.attribute_merges),
    )?;
    refined.validate()?;
    refined.freeze();
    Ok((refined, report))
}

fn alias_key(name: &str, level: AttributeLevel, target: &AttributeId) -> AttributeKey {
    AttributeKey {
        id: AttributeId::derive(&[name]),
        name: name.to_string(),
        level,
        canonical: false,
        alias_of: Some(target.clone()),
    }
}
