use std::collections::{BTreeMap, BTreeSet};

use super::{
    has_cycle, Concept, ConceptProvenance, ConceptStage, HypernymEdge, LexicalKb, SceneSchema,
};
use crate::cluster::{merge_labels, MergeCluster};
use crate::error::{Error, Result};
use crate::providers::Embedder;
use crate::text::ConceptId;

pub const DEFAULT_GAMMA1: f64 = 0.7;
pub const DEFAULT_MAX_DEPTH: usize = 2;

/// Adds lexicon relatives of every raw concept within `max_depth` steps.
///
/// A step follows either a hypernym or a hyponym entry, so depth 2 reaches
/// siblings through a shared hypernym. Concepts keep their first provenance
/// when reached more than once.
pub fn expand_concepts(raw: &[Concept], lex: &LexicalKb, max_depth: usize) -> Vec<Concept> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for c in raw {
        if seen.insert(c.label.clone()) {
            let mut c = c.clone();
            c.stage = c.stage.max(ConceptStage::Expanded);
            out.push(c);
        }
    }

    let roots: Vec<String> = out.iter().map(|c| c.label.clone()).collect();
    for root in roots {
        let mut visited: BTreeSet<String> = BTreeSet::from([root.clone()]);
        let mut frontier = vec![root];
        for _ in 0..max_depth {
            let mut next = Vec::new();
            for label in &frontier {
                let source = ConceptId::derive(&[label]);
                let relatives = lex
                    .hypernyms_of(label)
                    .iter()
                    .map(|k| {
                        (
                            k,
                            ConceptProvenance::HypernymOf {
                                source: source.clone(),
                            },
                        )
                    })
                    .chain(lex.hyponyms_of(label).iter().map(|k| {
                        (
                            k,
                            ConceptProvenance::HyponymOf {
                                source: source.clone(),
                            },
                        )
                    }));
                for (k, provenance) in relatives {
                    if !visited.insert(k.clone()) {
                        continue;
                    }
                    next.push(k.clone());
                    if seen.insert(k.clone()) {
                        out.push(Concept::new(k.clone(), ConceptStage::Expanded, provenance));
                    }
                }
            }
            frontier = next;
        }
    }
    out
}

/// Merges semantically overlapping concepts into the canonical set.
///
/// Pairs with cosine similarity at or above `gamma1` are merged until none
/// remain; the surviving label is the lexical hypernym when one subsumes the
/// other, otherwise the lexicographically smaller label.
pub fn cluster_concepts<E: Embedder + ?Sized>(
    scene: &str,
    expanded: &[Concept],
    gamma1: f64,
    embedder: &E,
    lex: &LexicalKb,
) -> Result<SceneSchema> {
    let mut by_label: BTreeMap<&str, &Concept> = BTreeMap::new();
    for c in expanded {
        if by_label.insert(c.label.as_str(), c).is_some() {
            return Err(Error::Precondition(format!(
                "duplicate concept label `{}`",
                c.label
            )));
        }
    }

    let outcome = merge_labels(
        by_label.keys().map(|l| l.to_string()),
        gamma1,
        embedder,
        &|a, b| lex.is_hypernym_of(a, b),
    )?;

    let concepts: Vec<Concept> = outcome
        .clusters
        .iter()
        .map(|cluster| canonical_concept(cluster, &by_label))
        .collect();
    let hierarchy = build_hierarchy(&concepts, lex);
    let schema = SceneSchema {
        scene: scene.to_string(),
        concepts,
        hierarchy,
        gamma1,
    };
    schema.validate()?;
    Ok(schema)
}

fn canonical_concept(cluster: &MergeCluster, by_label: &BTreeMap<&str, &Concept>) -> Concept {
    let head = by_label[cluster.canonical.as_str()];
    let mut aliases: BTreeSet<String> = BTreeSet::new();
    for m in &cluster.members {
        let member = by_label[m.as_str()];
        aliases.extend(member.aliases.iter().cloned());
        if *m != cluster.canonical {
            aliases.insert(m.clone());
        }
    }
    aliases.remove(&cluster.canonical);
    let provenance = if cluster.members.len() > 1 {
        let mut ids: Vec<ConceptId> = cluster
            .members
            .iter()
            .map(|m| by_label[m.as_str()].id.clone())
            .collect();
        ids.sort();
        ConceptProvenance::Merged { ids }
    } else {
        head.provenance.clone()
    };
    Concept {
        id: ConceptId::derive(&[&cluster.canonical]),
        label: cluster.canonical.clone(),
        stage: ConceptStage::Canonical,
        aliases,
        provenance,
    }
}

/// Hypernym edges among canonical concepts, resolved through aliases. Edges
/// that would close a cycle are skipped (in sorted order).
fn build_hierarchy(concepts: &[Concept], lex: &LexicalKb) -> Vec<HypernymEdge> {
    let mut owner: BTreeMap<&str, &ConceptId> = BTreeMap::new();
    for c in concepts {
        owner.insert(c.label.as_str(), &c.id);
        for a in &c.aliases {
            owner.entry(a.as_str()).or_insert(&c.id);
        }
    }

    let mut candidates: BTreeSet<HypernymEdge> = BTreeSet::new();
    for c in concepts {
        for label in std::iter::once(&c.label).chain(&c.aliases) {
            for up in lex.hypernyms_of(label) {
                if let Some(&parent) = owner.get(up.as_str()) {
                    candidates.insert(HypernymEdge {
                        child: c.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
            for down in lex.hyponyms_of(label) {
                if let Some(&child) = owner.get(down.as_str()) {
                    candidates.insert(HypernymEdge {
                        child: child.clone(),
                        parent: c.id.clone(),
                    });
                }
            }
        }
    }

    let mut edges: Vec<HypernymEdge> = Vec::new();
    for e in candidates {
        if e.child == e.parent {
            continue;
        }
        edges.push(e);
        if has_cycle(&edges) {
            edges.pop();
        }
    }
    edges
}
