//! Scene knowledge retrieval: similarity search over entities, subgraph
//! expansion, observation-driven pruning of visual knowledge and graph
//! convolutional encoding of what remains.

mod gcn;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::kg::{RetrievedSubgraph, TripleFilter};
pub use gcn::{
    encode, literal_node_id, normalized_adjacency, propagate, Activation, FeatureMatrix,
    GcnParameters,
};

use crate::error::{Error, Result};
use crate::kg::{query, SceneMmkg, Tail};
use crate::providers::{cosine, Embedder, EmbeddingVector};
use crate::text::{AssetId, EntityId};

pub const DEFAULT_GAMMA3: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub observation: Option<EmbeddingVector>,
    pub k: usize,
}

impl Query {
    pub fn text(text: impl Into<String>, k: usize) -> Self {
        Query {
            text: Some(text.into()),
            observation: None,
            k,
        }
    }

    pub fn observation(observation: EmbeddingVector, k: usize) -> Self {
        Query {
            text: None,
            observation: Some(observation),
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Contract("query k must be at least 1".into()));
        }
        if self.text.as_deref().is_none_or(|t| t.trim().is_empty()) && self.observation.is_none() {
            return Err(Error::Contract("query needs text or an observation".into()));
        }
        Ok(())
    }

    /// The vector the query searches with: its text embedding when text is
    /// present, otherwise the observation.
    pub fn vector<E: Embedder + ?Sized>(&self, embedder: &E) -> Result<EmbeddingVector> {
        self.validate()?;
        match (&self.text, &self.observation) {
            (Some(t), _) if !t.trim().is_empty() => embedder.embed(t),
            (_, Some(o)) => {
                if o.dim() != embedder.dimension() {
                    return Err(Error::Contract(format!(
                        "observation has dimension {}, embedder produces {}",
                        o.dim(),
                        embedder.dimension()
                    )));
                }
                Ok(o.clone())
            }
            _ => unreachable!("validated above"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub id: EntityId,
    pub label: String,
    pub score: f64,
}

/// Entity label embeddings of a frozen graph, computed once and reused
/// across queries.
#[derive(Debug, Clone)]
pub struct EntityIndex {
    entries: Vec<(EntityId, String, EmbeddingVector)>,
}

impl EntityIndex {
    pub fn build<E: Embedder + Sync + ?Sized>(graph: &SceneMmkg, embedder: &E) -> Result<Self> {
        if !graph.is_frozen() {
            return Err(Error::Precondition(
                "retrieval expects a frozen graph".into(),
            ));
        }
        let entities: Vec<_> = graph.entities().collect();
        let entries = entities
            .par_iter()
            .map(|e| Ok((e.id.clone(), e.label.clone(), embedder.embed(&e.label)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(EntityIndex { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` entities by cosine to `q`, best first; equal scores are
    /// ordered by ascending entity id.
    pub fn top_k(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<ScoredEntity>> {
        if self.entries.is_empty() {
            return Err(Error::Retrieval("graph has no entities".into()));
        }
        let mut scored = self
            .entries
            .iter()
            .map(|(id, label, v)| {
                Ok(ScoredEntity {
                    id: id.clone(),
                    label: label.clone(),
                    score: cosine(q, v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Most similar entities to the query.
pub fn retrieve<E: Embedder + Sync + ?Sized>(
    query: &Query,
    graph: &SceneMmkg,
    embedder: &E,
) -> Result<Vec<ScoredEntity>> {
    query.validate()?;
    let index = EntityIndex::build(graph, embedder)?;
    index.top_k(&query.vector(embedder)?, query.k)
}

/// Knowledge around the anchors within `hops` steps, split into textual and
/// visual triples.
pub fn expand(anchors: &[EntityId], graph: &SceneMmkg, hops: usize) -> Result<RetrievedSubgraph> {
    let triples = query::collect(graph, anchors, hops, &TripleFilter::default())?;
    Ok(RetrievedSubgraph::from_triples(anchors.to_vec(), triples))
}

/// Retrieval followed by expansion, with anchor scores attached.
pub fn retrieve_subgraph<E: Embedder + Sync + ?Sized>(
    query: &Query,
    graph: &SceneMmkg,
    embedder: &E,
    hops: usize,
) -> Result<RetrievedSubgraph> {
    let hits = retrieve(query, graph, embedder)?;
    let anchors: Vec<EntityId> = hits.iter().map(|h| h.id.clone()).collect();
    let mut sub = expand(&anchors, graph, hops)?;
    sub.anchor_scores = hits.into_iter().map(|h| (h.id, h.score)).collect();
    Ok(sub)
}

/// Keeps the visual triples whose image is similar enough to the
/// observation; textual triples pass through. Rejected images are removed
/// outright. Images are embedded by caption, else by file name.
pub fn denoise<E: Embedder + ?Sized>(
    subgraph: &RetrievedSubgraph,
    observation: &EmbeddingVector,
    gamma3: f64,
    graph: &SceneMmkg,
    embedder: &E,
) -> Result<RetrievedSubgraph> {
    if gamma3.is_nan() {
        return Err(Error::Precondition("denoise threshold is NaN".into()));
    }
    if observation.dim() != embedder.dimension() {
        return Err(Error::Contract(format!(
            "observation has dimension {}, embedder produces {}",
            observation.dim(),
            embedder.dimension()
        )));
    }
    let mut scores: BTreeMap<AssetId, f64> = BTreeMap::new();
    for t in &subgraph.visual {
        let Tail::Image(id) = &t.tail else { continue };
        if scores.contains_key(id) {
            continue;
        }
        let asset = graph
            .asset(id)
            .ok_or_else(|| Error::Lookup(format!("unknown asset {id}")))?;
        scores.insert(
            id.clone(),
            cosine(observation, &embedder.embed(asset.describe())?)?,
        );
    }
    scores.retain(|_, s| *s >= gamma3);
    let visual = subgraph
        .visual
        .iter()
        .filter(|t| matches!(&t.tail, Tail::Image(id) if scores.contains_key(id)))
        .cloned()
        .collect();
    Ok(RetrievedSubgraph {
        anchors: subgraph.anchors.clone(),
        textual: subgraph.textual.clone(),
        visual,
        anchor_scores: subgraph.anchor_scores.clone(),
        visual_scores: scores,
    })
}
