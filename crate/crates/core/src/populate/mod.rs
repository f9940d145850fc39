//! Two-step knowledge population.
//!
//! General-knowledge records are filtered through the schema boundary into
//! an intermediate graph ([`populate_general`]); scene records, possibly
//! carrying images, are filtered the same way and merged on top with scene
//! knowledge winning conflicts ([`populate_scene`], [`deconflict`]).

mod records;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub use records::{
    parse_records, read_records, write_rejects, ImageDescriptor, Reject, RelationKind,
    RelationPolicy, SourceRecord, SourceTail,
};

use crate::error::Result;
use crate::kg::{
    AttributeKey, AttributeLevel, BuildRecord, Entity, ImageAsset, SceneMmkg, Source, Tail, Triple,
    TripleKey,
};
use crate::schema::{Concept, SceneSchema};
use crate::text::{normalize_label, sha256_hex, EntityId};

#[derive(Debug, Clone, Default)]
pub struct PopulateOptions {
    /// Directory image uris are resolved against for checksumming.
    pub asset_root: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub graph: SceneMmkg,
    pub rejects: Vec<Reject>,
}

/// Resolves one record against the schema, registering its entities and
/// image asset in `graph`. Returns the triple to insert.
fn admit(
    graph: &mut SceneMmkg,
    index: &BTreeMap<&str, &Concept>,
    record: &SourceRecord,
    expected: Source,
    options: &PopulateOptions,
) -> std::result::Result<Triple, String> {
    if record.source_kind != expected {
        return Err(format!(
            "expected a {expected:?} record, got {:?}",
            record.source_kind
        ));
    }
    let head_label = normalize_label(&record.head);
    let relation = normalize_label(&record.relation);
    if head_label.is_empty() || relation.is_empty() {
        return Err("empty head or relation".into());
    }
    let Some(concept) = index.get(head_label.as_str()) else {
        return Err(format!("head `{head_label}` outside schema"));
    };

    let tail = match &record.tail {
        SourceTail::Label(label) => {
            let norm = normalize_label(label);
            if norm.is_empty() {
                return Err("empty tail".into());
            }
            match index.get(norm.as_str()) {
                Some(c) => Tail::Entity(concept_entity(graph, c, &norm)?),
                // Out-of-schema names stay as text rather than becoming entities.
                None => Tail::Literal(label.trim().to_string()),
            }
        }
        SourceTail::Literal(text) => {
            let text = text.trim();
            if text.is_empty() {
                return Err("empty tail".into());
            }
            Tail::Literal(text.to_string())
        }
        SourceTail::Image(desc) => {
            if expected != Source::Scene {
                return Err("image payloads are only accepted from scene sources".into());
            }
            let Some(kind) = desc.kind else {
                return Err("image descriptor is missing `kind`".into());
            };
            if desc.uri.trim().is_empty() {
                return Err("image descriptor has an empty uri".into());
            }
            let caption = desc
                .caption
                .as_deref()
                .map(str::trim)
                .filter(|c| !c.is_empty());
            let mut asset = ImageAsset::new(desc.uri.trim(), kind, caption.map(String::from));
            if let Some(root) = &options.asset_root {
                if let Ok(bytes) = std::fs::read(root.join(&asset.uri)) {
                    asset.checksum = Some(sha256_hex(&bytes));
                }
            }
            Tail::Image(graph.add_asset(asset).map_err(|e| e.to_string())?)
        }
    };

    let head = concept_entity(graph, concept, &head_label)?;
    if matches!(record.tail, SourceTail::Literal(_)) {
        graph
            .add_attribute_key(AttributeKey::canonical(
                &relation,
                AttributeLevel::EntityLevel,
            ))
            .map_err(|e| e.to_string())?;
    }
    Ok(Triple::new(head, relation, tail, expected).with_provenance(record.source_id.clone()))
}

fn concept_entity(
    graph: &mut SceneMmkg,
    concept: &Concept,
    surface: &str,
) -> std::result::Result<EntityId, String> {
    let mut entity = Entity::for_concept(&concept.label, concept.id.clone());
    if surface != concept.label {
        entity.aliases.insert(surface.to_string());
    }
    graph.add_entity(entity).map_err(|e| e.to_string())
}

/// Admits general-knowledge records whose head falls inside the schema.
///
/// The returned graph is mutable; out-of-schema and malformed records are
/// reported as rejects.
pub fn populate_general(
    schema: &SceneSchema,
    records: impl IntoIterator<Item = SourceRecord>,
) -> Result<Population> {
    let mut graph = SceneMmkg::new(schema.clone());
    let index = schema.label_index();
    let options = PopulateOptions::default();
    let mut rejects = Vec::new();
    let mut seen = 0;
    for record in records {
        seen += 1;
        match admit(&mut graph, &index, &record, Source::General, &options) {
            Ok(triple) => {
                graph.add_triple(triple)?;
            }
            Err(reason) => {
                log::debug!("rejected general record {}: {reason}", record.source_id);
                rejects.push(Reject::of(&record, reason));
            }
        }
    }
    let edges = graph.triples.len();
    graph.log_stage(
        BuildRecord::new("populate_general")
            .count("records", seen)
            .count("rejected", rejects.len())
            .count("triples", edges),
    )?;
    Ok(Population { graph, rejects })
}

/// Adds scene-oriented records on top of the intermediate graph and freezes
/// the result. The input graph is not modified.
pub fn populate_scene(
    intermediate: &SceneMmkg,
    records: impl IntoIterator<Item = SourceRecord>,
    policy: &RelationPolicy,
    options: &PopulateOptions,
) -> Result<Population> {
    let mut graph = intermediate.clone();
    graph.frozen = false;
    let schema = graph.schema.clone();
    let index = schema.label_index();

    let mut scene: BTreeMap<TripleKey, Triple> = BTreeMap::new();
    let mut rejects = Vec::new();
    let mut seen = 0;
    for record in records {
        seen += 1;
        match admit(&mut graph, &index, &record, Source::Scene, options) {
            Ok(t) => match scene.get_mut(&t.key()) {
                Some(existing) => existing.absorb(t),
                None => {
                    scene.insert(t.key(), t);
                }
            },
            Err(reason) => {
                log::debug!("rejected scene record {}: {reason}", record.source_id);
                rejects.push(Reject::of(&record, reason));
            }
        }
    }

    let general: Vec<Triple> = std::mem::take(&mut graph.triples).into_values().collect();
    let merged = deconflict(&general, &scene.into_values().collect::<Vec<_>>(), policy);
    for t in merged {
        graph.add_triple(t)?;
    }
    prune_unused_attributes(&mut graph);

    let stats = graph.stats();
    graph.log_stage(
        BuildRecord::new("populate_scene")
            .count("records", seen)
            .count("rejected", rejects.len())
            .count("triples", stats.edges)
            .count("images", stats.images),
    )?;
    graph.freeze();
    Ok(Population { graph, rejects })
}

fn prune_unused_attributes(graph: &mut SceneMmkg) {
    let used: BTreeSet<&str> = graph
        .triples
        .values()
        .map(|t| t.relation.as_str())
        .collect();
    let keep: BTreeSet<_> = graph
        .attribute_keys
        .values()
        .filter(|k| used.contains(k.name.as_str()))
        .map(|k| k.id.clone())
        .collect();
    graph.attribute_keys.retain(|id, _| keep.contains(id));
}

/// Merges general and scene triples; scene knowledge wins conflicts.
///
/// For a functional relation, any scene triple on `(head, relation)` evicts
/// every general triple with a different tail there. Identical triples
/// collapse into one scene-sourced triple with merged provenance;
/// multi-valued relations are unioned. Output is sorted by key.
pub fn deconflict(general: &[Triple], scene: &[Triple], policy: &RelationPolicy) -> Vec<Triple> {
    let mut out: BTreeMap<TripleKey, Triple> = BTreeMap::new();
    for t in scene {
        let mut t = t.clone();
        t.source = Source::Scene;
        match out.get_mut(&t.key()) {
            Some(existing) => existing.absorb(t),
            None => {
                out.insert(t.key(), t);
            }
        }
    }
    let contested: BTreeSet<(&EntityId, &str)> = scene
        .iter()
        .filter(|t| policy.is_functional(&t.relation))
        .map(|t| (&t.head, t.relation.as_str()))
        .collect();

    for t in general {
        let key = t.key();
        if let Some(existing) = out.get_mut(&key) {
            existing.absorb(t.clone());
            continue;
        }
        if contested.contains(&(&t.head, t.relation.as_str())) {
            continue;
        }
        out.insert(key, t.clone());
    }
    out.into_values().collect()
}

/// Reads a general/scene ingest pair and runs both population steps.
pub fn populate_from_files(
    schema: &SceneSchema,
    general_path: &Path,
    scene_path: &Path,
    policy: &RelationPolicy,
    options: &PopulateOptions,
) -> Result<Population> {
    let (general, mut rejects) = read_records(general_path)?;
    let (scene, scene_rejects) = read_records(scene_path)?;
    let first = populate_general(schema, general)?;
    rejects.extend(first.rejects);
    rejects.extend(scene_rejects);
    let second = populate_scene(&first.graph, scene, policy, options)?;
    rejects.extend(second.rejects);
    Ok(Population {
        graph: second.graph,
        rejects,
    })
}
