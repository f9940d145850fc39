use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{SceneMmkg, Source, Tail, Triple, TripleKey};
use crate::error::{Error, Result};
use crate::text::{AssetId, EntityId};

/// Restricts which triples a traversal may use. Empty fields allow everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleFilter {
    #[serde(default)]
    pub relations: Option<BTreeSet<String>>,
    #[serde(default)]
    pub sources: Option<BTreeSet<Source>>,
}

impl TripleFilter {
    pub fn allows(&self, t: &Triple) -> bool {
        self.relations
            .as_ref()
            .is_none_or(|r| r.contains(&t.relation))
            && self.sources.as_ref().is_none_or(|s| s.contains(&t.source))
    }
}

/// Multimodal subgraph `(H_t, H_v)` around a set of anchor entities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSubgraph {
    pub anchors: Vec<EntityId>,
    /// Triples with entity or literal tails, sorted by key.
    pub textual: Vec<Triple>,
    /// Triples with image tails, sorted by key.
    pub visual: Vec<Triple>,
    #[serde(default)]
    pub anchor_scores: BTreeMap<EntityId, f64>,
    #[serde(default)]
    pub visual_scores: BTreeMap<AssetId, f64>,
}

impl RetrievedSubgraph {
    pub(crate) fn from_triples(
        anchors: Vec<EntityId>,
        triples: BTreeMap<TripleKey, Triple>,
    ) -> Self {
        let (visual, textual) = triples.into_values().partition(|t| t.tail.is_visual());
        RetrievedSubgraph {
            anchors,
            textual,
            visual,
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty() && self.textual.is_empty() && self.visual.is_empty()
    }

    pub fn triple_count(&self) -> usize {
        self.textual.len() + self.visual.len()
    }

    pub fn visual_assets(&self) -> BTreeSet<&AssetId> {
        self.visual
            .iter()
            .filter_map(|t| match &t.tail {
                Tail::Image(id) => Some(id),
                _ => None,
            })
            .collect()
    }
}

/// Triples reachable from `entity` within `hops` undirected steps.
///
/// A step crosses one triple that passes `filter`; literal and image tails
/// end a path. With `hops = 0` the result holds only the anchor.
pub fn neighbors(
    graph: &SceneMmkg,
    entity: &EntityId,
    hops: usize,
    filter: &TripleFilter,
) -> Result<RetrievedSubgraph> {
    let collected = collect(graph, std::slice::from_ref(entity), hops, filter)?;
    Ok(RetrievedSubgraph::from_triples(
        vec![entity.clone()],
        collected,
    ))
}

pub(crate) fn collect(
    graph: &SceneMmkg,
    starts: &[EntityId],
    hops: usize,
    filter: &TripleFilter,
) -> Result<BTreeMap<TripleKey, Triple>> {
    for s in starts {
        if graph.entity(s).is_none() {
            return Err(Error::Lookup(format!("unknown entity {s}")));
        }
    }
    let mut out = BTreeMap::new();
    if hops == 0 {
        return Ok(out);
    }

    let mut incident: BTreeMap<&EntityId, Vec<&Triple>> = BTreeMap::new();
    for t in graph.triples().filter(|t| filter.allows(t)) {
        incident.entry(&t.head).or_default().push(t);
        if let Tail::Entity(tail) = &t.tail {
            if tail != &t.head {
                incident.entry(tail).or_default().push(t);
            }
        }
    }

    let mut visited: BTreeSet<&EntityId> = starts.iter().collect();
    let mut frontier: Vec<&EntityId> = visited.iter().copied().collect();
    for _ in 0..hops {
        let mut next = Vec::new();
        for node in frontier {
            for t in incident.get(node).into_iter().flatten() {
                out.entry(t.key()).or_insert_with(|| (*t).clone());
                let other = match &t.tail {
                    Tail::Entity(tail) if tail != node => Some(tail),
                    _ if &t.head != node => Some(&t.head),
                    _ => None,
                };
                if let Some(other) = other {
                    if visited.insert(other) {
                        next.push(other);
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}
