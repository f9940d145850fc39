use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_label;

/// Hypernym and hyponym extracts from an external lexical resource.
///
/// Lookups are total: unknown labels have no relatives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalKb {
    #[serde(default)]
    pub hypernyms: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub hyponyms: BTreeMap<String, BTreeSet<String>>,
}

static EMPTY: BTreeSet<String> = BTreeSet::new();

impl LexicalKb {
    pub fn new(
        hypernyms: impl IntoIterator<Item = (String, Vec<String>)>,
        hyponyms: impl IntoIterator<Item = (String, Vec<String>)>,
    ) -> Self {
        fn norm(
            entries: impl IntoIterator<Item = (String, Vec<String>)>,
        ) -> BTreeMap<String, BTreeSet<String>> {
            let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for (k, vs) in entries {
                out.entry(normalize_label(&k))
                    .or_default()
                    .extend(vs.iter().map(|v| normalize_label(v)));
            }
            out
        }
        LexicalKb {
            hypernyms: norm(hypernyms),
            hyponyms: norm(hyponyms),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: LexicalKb = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(LexicalKb::new(
            raw.hypernyms
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect())),
            raw.hyponyms
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect())),
        ))
    }

    pub fn hypernyms_of(&self, label: &str) -> &BTreeSet<String> {
        self.hypernyms.get(label).unwrap_or(&EMPTY)
    }

    pub fn hyponyms_of(&self, label: &str) -> &BTreeSet<String> {
        self.hyponyms.get(label).unwrap_or(&EMPTY)
    }

    /// Whether `general` subsumes `specific` through any chain of hypernym
    /// entries of `specific` or hyponym entries of `general`.
    pub fn is_hypernym_of(&self, general: &str, specific: &str) -> bool {
        if general == specific {
            return false;
        }
        let mut stack = vec![specific.to_string()];
        let mut seen = BTreeSet::new();
        while let Some(node) = stack.pop() {
            if !seen.insert(node.clone()) {
                continue;
            }
            for up in self.hypernyms_of(&node) {
                if up == general {
                    return true;
                }
                stack.push(up.clone());
            }
            // `node` is a hyponym of every key listing it.
            for (parent, children) in &self.hyponyms {
                if children.contains(&node) {
                    if parent == general {
                        return true;
                    }
                    stack.push(parent.clone());
                }
            }
        }
        false
    }
}
