//! Typed multimodal graph store.
//!
//! A [`SceneMmkg`] holds entities bounded by a [`SceneSchema`], directed
//! typed triples whose tails are entities, literals or registered images,
//! and the attribute key registry. Records are kept in ordered maps so every
//! iteration (and therefore every serialization) is canonical.

pub(crate) mod query;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use query::{neighbors, RetrievedSubgraph, TripleFilter};
pub use store::{load, save, verify_asset_files, write_file_atomically, Manifest, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::schema::SceneSchema;
use crate::text::{stable_id, AssetId, AttributeId, ConceptId, EntityId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    General,
    Scene,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Entity(EntityId),
    Literal(String),
    Image(AssetId),
}

impl Tail {
    pub fn is_visual(&self) -> bool {
        matches!(self, Tail::Image(_))
    }

    pub fn entity(&self) -> Option<&EntityId> {
        match self {
            Tail::Entity(id) => Some(id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub label: String,
    pub concept_id: ConceptId,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
    /// Set on part nodes created by attribute hierarchicalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_of: Option<EntityId>,
}

impl Entity {
    /// Entity standing for a schema concept; its id derives from the label.
    pub fn for_concept(label: &str, concept_id: ConceptId) -> Self {
        Entity {
            id: EntityId::derive(&[label]),
            label: label.to_string(),
            concept_id,
            aliases: BTreeSet::new(),
            part_of: None,
        }
    }

    /// Part node of `parent`, e.g. the frame of a chair.
    pub fn part(parent: &Entity, part: &str) -> Self {
        Entity {
            id: EntityId::derive(&["part", parent.id.as_str(), part]),
            label: format!("{} {part}", parent.label),
            concept_id: parent.concept_id.clone(),
            aliases: BTreeSet::new(),
            part_of: Some(parent.id.clone()),
        }
    }
}

pub type TripleKey = (EntityId, String, Tail);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: Tail,
    pub source: Source,
    #[serde(default)]
    pub provenance: BTreeSet<String>,
}

impl Triple {
    pub fn new(head: EntityId, relation: impl Into<String>, tail: Tail, source: Source) -> Self {
        Triple {
            head,
            relation: relation.into(),
            tail,
            source,
            provenance: BTreeSet::new(),
        }
    }

    pub fn with_provenance(mut self, locator: impl Into<String>) -> Self {
        self.provenance.insert(locator.into());
        self
    }

    pub fn key(&self) -> TripleKey {
        (self.head.clone(), self.relation.clone(), self.tail.clone())
    }

    pub fn id(&self) -> String {
        let (kind, value) = match &self.tail {
            Tail::Entity(id) => ("entity", id.as_str()),
            Tail::Literal(s) => ("literal", s.as_str()),
            Tail::Image(id) => ("image", id.as_str()),
        };
        stable_id("triple", &[self.head.as_str(), &self.relation, kind, value])
    }

    /// Folds a duplicate of the same (head, relation, tail) into `self`:
    /// provenance is unioned and scene knowledge wins the source tag.
    pub fn absorb(&mut self, other: Triple) {
        self.source = self.source.max(other.source);
        self.provenance.extend(other.provenance);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    /// Rendered object imagery without scene context.
    Synthetic,
    /// Imagery captured or rendered in a situated scene.
    RealWorld,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAsset {
    pub id: AssetId,
    pub uri: String,
    /// SHA-256 of the image bytes, when the file was readable at ingest.
    #[serde(default)]
    pub checksum: Option<String>,
    pub kind: ImageKind,
    #[serde(default)]
    pub caption: Option<String>,
}

impl ImageAsset {
    pub fn new(uri: impl Into<String>, kind: ImageKind, caption: Option<String>) -> Self {
        let uri = uri.into();
        ImageAsset {
            id: AssetId::derive(&[&uri]),
            uri,
            checksum: None,
            kind,
            caption,
        }
    }

    /// Text used to embed the image offline: the caption, else the file name.
    pub fn describe(&self) -> &str {
        match self.caption.as_deref().map(str::trim) {
            Some(c) if !c.is_empty() => c,
            _ => {
                let base = self
                    .uri
                    .trim_end_matches('/')
                    .rsplit(['/', '\\'])
                    .next()
                    .unwrap_or("");
                if base.is_empty() {
                    &self.uri
                } else {
                    base
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeLevel {
    EntityLevel,
    PartLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeKey {
    pub id: AttributeId,
    pub name: String,
    pub level: AttributeLevel,
    pub canonical: bool,
    #[serde(default)]
    pub alias_of: Option<AttributeId>,
}

impl AttributeKey {
    pub fn canonical(name: &str, level: AttributeLevel) -> Self {
        AttributeKey {
            id: AttributeId::derive(&[name]),
            name: name.to_string(),
            level,
            canonical: true,
            alias_of: None,
        }
    }
}

/// One pipeline stage applied to the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub stage: String,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
}

impl BuildRecord {
    pub fn new(stage: impl Into<String>) -> Self {
        BuildRecord {
            stage: stage.into(),
            counts: BTreeMap::new(),
        }
    }

    pub fn count(mut self, name: &str, value: usize) -> Self {
        self.counts.insert(name.to_string(), value as u64);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub images: usize,
    pub distinct_attributes: usize,
    pub per_source: BTreeMap<Source, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMmkg {
    pub(crate) schema: SceneSchema,
    pub(crate) entities: BTreeMap<EntityId, Entity>,
    pub(crate) triples: BTreeMap<TripleKey, Triple>,
    pub(crate) assets: BTreeMap<AssetId, ImageAsset>,
    pub(crate) attribute_keys: BTreeMap<AttributeId, AttributeKey>,
    pub(crate) frozen: bool,
    pub(crate) build_log: Vec<BuildRecord>,
}

impl SceneMmkg {
    pub fn new(schema: SceneSchema) -> Self {
        SceneMmkg {
            schema,
            entities: BTreeMap::new(),
            triples: BTreeMap::new(),
            assets: BTreeMap::new(),
            attribute_keys: BTreeMap::new(),
            frozen: false,
            build_log: Vec::new(),
        }
    }

    pub fn schema(&self) -> &SceneSchema {
        &self.schema
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn triples(&self) -> impl ExactSizeIterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn triple(&self, key: &TripleKey) -> Option<&Triple> {
        self.triples.get(key)
    }

    pub fn assets(&self) -> impl ExactSizeIterator<Item = &ImageAsset> {
        self.assets.values()
    }

    pub fn asset(&self, id: &AssetId) -> Option<&ImageAsset> {
        self.assets.get(id)
    }

    pub fn attribute_keys(&self) -> impl ExactSizeIterator<Item = &AttributeKey> {
        self.attribute_keys.values()
    }

    pub fn attribute_key(&self, name: &str) -> Option<&AttributeKey> {
        self.attribute_keys.get(&AttributeId::derive(&[name]))
    }

    /// Whether `relation` is a registered attribute key (canonical or alias).
    pub fn is_attribute(&self, relation: &str) -> bool {
        self.attribute_key(relation).is_some()
    }

    pub fn build_log(&self) -> &[BuildRecord] {
        &self.build_log
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Makes the graph immutable. Idempotent.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Display text of a tail: entity label, literal text or image description.
    pub fn tail_text<'a>(&'a self, tail: &'a Tail) -> &'a str {
        match tail {
            Tail::Entity(id) => self
                .entities
                .get(id)
                .map_or(id.as_str(), |e| e.label.as_str()),
            Tail::Literal(s) => s,
            Tail::Image(id) => self.assets.get(id).map_or(id.as_str(), |a| a.describe()),
        }
    }

    fn ensure_mutable(&self) -> Result<()> {
        if self.frozen {
            Err(Error::Frozen)
        } else {
            Ok(())
        }
    }

    /// Stores an entity. Re-adding an existing id merges aliases.
    pub fn add_entity(&mut self, entity: Entity) -> Result<EntityId> {
        self.ensure_mutable()?;
        if self.schema.concept(&entity.concept_id).is_none() {
            return Err(Error::Integrity(format!(
                "entity `{}` references unknown concept {}",
                entity.label, entity.concept_id
            )));
        }
        if let Some(parent) = &entity.part_of {
            if !self.entities.contains_key(parent) {
                return Err(Error::Integrity(format!(
                    "part `{}` references unknown parent {parent}",
                    entity.label
                )));
            }
        }
        let id = entity.id.clone();
        match self.entities.get_mut(&id) {
            Some(existing) => {
                if existing.label != entity.label || existing.concept_id != entity.concept_id {
                    return Err(Error::Integrity(format!(
                        "entity id {id} already bound to `{}`",
                        existing.label
                    )));
                }
                existing.aliases.extend(entity.aliases);
            }
            None => {
                self.entities.insert(id.clone(), entity);
            }
        }
        Ok(id)
    }

    pub fn add_asset(&mut self, asset: ImageAsset) -> Result<AssetId> {
        self.ensure_mutable()?;
        let id = asset.id.clone();
        match self.assets.get_mut(&id) {
            Some(existing) => {
                if existing.kind != asset.kind {
                    return Err(Error::Integrity(format!(
                        "asset `{}` registered as both {:?} and {:?}",
                        asset.uri, existing.kind, asset.kind
                    )));
                }
                // Smallest caption wins so ingest order never matters.
                existing.caption = match (existing.caption.take(), asset.caption) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                if existing.checksum.is_none() {
                    existing.checksum = asset.checksum;
                }
            }
            None => {
                self.assets.insert(id.clone(), asset);
            }
        }
        Ok(id)
    }

    /// Stores a triple; an existing (head, relation, tail) absorbs it.
    pub fn add_triple(&mut self, triple: Triple) -> Result<TripleKey> {
        self.ensure_mutable()?;
        self.check_triple(&triple)?;
        let key = triple.key();
        match self.triples.get_mut(&key) {
            Some(existing) => existing.absorb(triple),
            None => {
                self.triples.insert(key.clone(), triple);
            }
        }
        Ok(key)
    }

    fn check_triple(&self, t: &Triple) -> Result<()> {
        if !self.entities.contains_key(&t.head) {
            return Err(Error::Integrity(format!(
                "triple head {} does not resolve",
                t.head
            )));
        }
        if t.relation.trim().is_empty() {
            return Err(Error::Integrity("triple relation is empty".into()));
        }
        match &t.tail {
            Tail::Entity(id) if !self.entities.contains_key(id) => Err(Error::Integrity(format!(
                "triple tail entity {id} does not resolve"
            ))),
            Tail::Image(id) if !self.assets.contains_key(id) => Err(Error::Integrity(format!(
                "triple tail image {id} is not registered"
            ))),
            _ => Ok(()),
        }
    }

    /// Registers an attribute key; re-registration keeps the first record.
    pub fn add_attribute_key(&mut self, key: AttributeKey) -> Result<AttributeId> {
        self.ensure_mutable()?;
        if key.id != AttributeId::derive(&[&key.name]) {
            return Err(Error::Integrity(format!(
                "attribute key `{}` has a non-derived id",
                key.name
            )));
        }
        let id = key.id.clone();
        self.attribute_keys.entry(id.clone()).or_insert(key);
        Ok(id)
    }

    pub fn log_stage(&mut self, record: BuildRecord) -> Result<()> {
        self.ensure_mutable()?;
        self.build_log.push(record);
        Ok(())
    }

    /// Follows alias links to the canonical key.
    pub fn canonical_attribute(&self, name: &str) -> Result<&AttributeKey> {
        let mut key = self
            .attribute_key(name)
            .ok_or_else(|| Error::Lookup(format!("unknown attribute key `{name}`")))?;
        let mut hops = 0;
        while let Some(target) = &key.alias_of {
            hops += 1;
            if hops > self.attribute_keys.len() {
                return Err(Error::Integrity(format!("alias cycle through `{name}`")));
            }
            key = self.attribute_keys.get(target).ok_or_else(|| {
                Error::Integrity(format!("alias of `{}` does not resolve", key.name))
            })?;
        }
        if !key.canonical {
            return Err(Error::Integrity(format!(
                "alias chain of `{name}` ends at a non-canonical key"
            )));
        }
        Ok(key)
    }

    /// Full-scan referential integrity check.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        for (id, e) in &self.entities {
            if id != &e.id {
                return Err(Error::Integrity(format!(
                    "entity keyed {id} carries id {}",
                    e.id
                )));
            }
            if self.schema.concept(&e.concept_id).is_none() {
                return Err(Error::Integrity(format!(
                    "entity `{}` references unknown concept {}",
                    e.label, e.concept_id
                )));
            }
            if let Some(parent) = &e.part_of {
                if !self.entities.contains_key(parent) {
                    return Err(Error::Integrity(format!(
                        "part `{}` has no parent",
                        e.label
                    )));
                }
            }
        }
        for (id, a) in &self.assets {
            if id != &a.id {
                return Err(Error::Integrity(format!(
                    "asset keyed {id} carries id {}",
                    a.id
                )));
            }
        }
        for (key, t) in &self.triples {
            if key != &t.key() {
                return Err(Error::Integrity("triple stored under a foreign key".into()));
            }
            self.check_triple(t)?;
        }
        for (id, k) in &self.attribute_keys {
            if id != &k.id {
                return Err(Error::Integrity(format!(
                    "attribute keyed {id} carries id {}",
                    k.id
                )));
            }
            if k.canonical != k.alias_of.is_none() {
                return Err(Error::Integrity(format!(
                    "attribute `{}` must be canonical exactly when it has no alias target",
                    k.name
                )));
            }
            self.canonical_attribute(&k.name)?;
        }
        Ok(())
    }

    pub fn stats(&self) -> GraphStats {
        let mut per_source = BTreeMap::from([(Source::General, 0), (Source::Scene, 0)]);
        for t in self.triples.values() {
            *per_source.entry(t.source).or_default() += 1;
        }
        GraphStats {
            nodes: self.entities.len(),
            edges: self.triples.len(),
            images: self.assets.len(),
            distinct_attributes: self.attribute_keys.values().filter(|k| k.canonical).count(),
            per_source,
        }
    }
}
