//! On-disk layout:
//!
//! ```text
//! <dir>/manifest.json     version, counts, sha256 per file, build log
//! <dir>/schema.json
//! <dir>/entities.jsonl    one record per line, sorted by id
//! <dir>/triples.jsonl     sorted by (head, relation, tail)
//! <dir>/assets.jsonl
//! <dir>/attributes.jsonl
//! ```
//!
//! The manifest carries its own checksum, computed over its bytes with the
//! checksum value blanked. Saves go through a sibling temporary directory
//! and a rename, so a failed save never leaves a partial graph behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{AttributeKey, BuildRecord, Entity, ImageAsset, SceneMmkg, Triple};
use crate::error::{Error, Result};
use crate::schema::SceneSchema;
use crate::text::sha256_hex;

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const SCHEMA: &str = "schema.json";
const ENTITIES: &str = "entities.jsonl";
const TRIPLES: &str = "triples.jsonl";
const ASSETS: &str = "assets.jsonl";
const ATTRIBUTES: &str = "attributes.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub frozen: bool,
    pub counts: BTreeMap<String, u64>,
    /// SHA-256 of each data file.
    pub files: BTreeMap<String, String>,
    pub build_log: Vec<BuildRecord>,
    pub checksum: String,
}

impl Manifest {
    fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    fn blank_marker(checksum: &str) -> String {
        format!("\"checksum\": \"{checksum}\"")
    }
}

fn jsonl<T: Serialize>(records: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn render_files(graph: &SceneMmkg) -> Vec<(&'static str, String)> {
    vec![
        (SCHEMA, graph.schema.to_json()),
        (ENTITIES, jsonl(graph.entities.values())),
        (TRIPLES, jsonl(graph.triples.values())),
        (ASSETS, jsonl(graph.assets.values())),
        (ATTRIBUTES, jsonl(graph.attribute_keys.values())),
    ]
}

/// Writes the graph to `dir`, replacing a previous graph saved there.
pub fn save(graph: &SceneMmkg, dir: &Path) -> Result<Manifest> {
    graph.validate()?;
    let files = render_files(graph);

    let counts = BTreeMap::from([
        ("assets".to_string(), graph.assets.len() as u64),
        ("attributes".to_string(), graph.attribute_keys.len() as u64),
        ("concepts".to_string(), graph.schema.concepts.len() as u64),
        ("entities".to_string(), graph.entities.len() as u64),
        ("triples".to_string(), graph.triples.len() as u64),
    ]);
    let mut manifest = Manifest {
        version: FORMAT_VERSION,
        frozen: graph.frozen,
        counts,
        files: files
            .iter()
            .map(|(name, body)| (name.to_string(), sha256_hex(body.as_bytes())))
            .collect(),
        build_log: graph.build_log.clone(),
        checksum: String::new(),
    };
    manifest.checksum = sha256_hex(manifest.render().as_bytes());

    let mut all = files;
    all.push((MANIFEST, manifest.render()));
    write_dir_atomically(dir, &all)?;
    Ok(manifest)
}

/// Replaces `dir` with a directory holding exactly `files`.
pub(crate) fn write_dir_atomically(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    if dir.exists() {
        let is_graph_dir = dir.is_dir()
            && (dir.join(MANIFEST).is_file()
                || fs::read_dir(dir)
                    .map_err(|e| Error::io(dir, e))?
                    .next()
                    .is_none());
        if !is_graph_dir {
            return Err(Error::Config(format!(
                "refusing to overwrite `{}`: not a graph directory",
                dir.display()
            )));
        }
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => Path::new(".").to_path_buf(),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;

    let staging = tempfile::Builder::new()
        .prefix(".scene-mmkg-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    for (name, body) in files {
        let path = staging.path().join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }

    if dir.exists() {
        let retired = tempfile::Builder::new()
            .prefix(".scene-mmkg-old-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?;
        let retired_path = retired.path().join("graph");
        fs::rename(dir, &retired_path).map_err(|e| Error::io(dir, e))?;
        if let Err(e) = fs::rename(staging.path(), dir) {
            let _ = fs::rename(&retired_path, dir);
            return Err(Error::io(dir, e));
        }
        drop(retired);
    } else {
        fs::rename(staging.path(), dir).map_err(|e| Error::io(dir, e))?;
    }
    // The staging path was renamed away; dropping the handle is a no-op.
    let _ = staging.keep();
    Ok(())
}

/// Writes one file by staging a sibling temp file and renaming it over
/// `path`, so readers never observe a partial write.
pub fn write_file_atomically(path: &Path, body: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => Path::new(".").to_path_buf(),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let mut staged = tempfile::Builder::new()
        .prefix(".scene-mmkg-")
        .tempfile_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    std::io::Write::write_all(&mut staged, body).map_err(|e| Error::io(path, e))?;
    staged.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn corruption(file: &str, reason: impl Into<String>) -> Error {
    Error::Corruption {
        file: file.to_string(),
        reason: reason.into(),
    }
}

fn read_verified(dir: &Path, name: &str, manifest: &Manifest) -> Result<String> {
    let expected = manifest
        .files
        .get(name)
        .ok_or_else(|| corruption(MANIFEST, format!("no checksum recorded for {name}")))?;
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| corruption(name, e.to_string()))?;
    if &sha256_hex(&bytes) != expected {
        return Err(corruption(name, "sha256 mismatch"));
    }
    String::from_utf8(bytes).map_err(|_| corruption(name, "not valid UTF-8"))
}

fn parse_lines<T: DeserializeOwned>(name: &str, body: &str) -> Result<Vec<T>> {
    body.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| corruption(name, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let raw = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData => corruption(MANIFEST, "not valid UTF-8"),
        _ => Error::io(&path, e),
    })?;
    let manifest: Manifest =
        serde_json::from_str(&raw).map_err(|e| corruption(MANIFEST, e.to_string()))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    let marker = Manifest::blank_marker(&manifest.checksum);
    if !raw.contains(&marker) {
        return Err(corruption(MANIFEST, "checksum field is malformed"));
    }
    let blanked = raw.replacen(&marker, &Manifest::blank_marker(""), 1);
    if sha256_hex(blanked.as_bytes()) != manifest.checksum {
        return Err(corruption(MANIFEST, "manifest checksum mismatch"));
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<SceneMmkg> {
    let manifest = read_manifest(dir)?;

    let schema: SceneSchema = {
        let body = read_verified(dir, SCHEMA, &manifest)?;
        serde_json::from_str(&body).map_err(|e| corruption(SCHEMA, e.to_string()))?
    };
    let entities: Vec<Entity> = parse_lines(ENTITIES, &read_verified(dir, ENTITIES, &manifest)?)?;
    let triples: Vec<Triple> = parse_lines(TRIPLES, &read_verified(dir, TRIPLES, &manifest)?)?;
    let assets: Vec<ImageAsset> = parse_lines(ASSETS, &read_verified(dir, ASSETS, &manifest)?)?;
    let attributes: Vec<AttributeKey> =
        parse_lines(ATTRIBUTES, &read_verified(dir, ATTRIBUTES, &manifest)?)?;

    let expect = |name: &str, file: &str, n: usize| -> Result<()> {
        match manifest.counts.get(name) {
            Some(&c) if c == n as u64 => Ok(()),
            other => Err(corruption(
                file,
                format!("{name}: manifest says {other:?}, found {n}"),
            )),
        }
    };
    expect("entities", ENTITIES, entities.len())?;
    expect("triples", TRIPLES, triples.len())?;
    expect("assets", ASSETS, assets.len())?;
    expect("attributes", ATTRIBUTES, attributes.len())?;
    expect("concepts", SCHEMA, schema.concepts.len())?;

    let graph = SceneMmkg {
        schema,
        entities: entities.into_iter().map(|e| (e.id.clone(), e)).collect(),
        triples: triples.into_iter().map(|t| (t.key(), t)).collect(),
        assets: assets.into_iter().map(|a| (a.id.clone(), a)).collect(),
        attribute_keys: attributes.into_iter().map(|k| (k.id.clone(), k)).collect(),
        frozen: manifest.frozen,
        build_log: manifest.build_log,
    };
    // Duplicate ids collapse in the maps above.
    expect("entities", ENTITIES, graph.entities.len())?;
    expect("triples", TRIPLES, graph.triples.len())?;
    expect("assets", ASSETS, graph.assets.len())?;
    expect("attributes", ATTRIBUTES, graph.attribute_keys.len())?;
    graph.validate()?;
    Ok(graph)
}

/// Checks every asset with a recorded checksum whose file exists under
/// `base` (or at its absolute uri).
pub fn verify_asset_files(graph: &SceneMmkg, base: &Path) -> Result<()> {
    for asset in graph.assets() {
        let Some(expected) = &asset.checksum else {
            continue;
        };
        let path = base.join(&asset.uri);
        if let Ok(bytes) = fs::read(&path) {
            if &sha256_hex(&bytes) != expected {
                return Err(corruption(&asset.uri, "image checksum mismatch"));
            }
        }
    }
    Ok(())
}
