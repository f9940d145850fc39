use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_label;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    parts: Vec<String>,
    general_attributes: Vec<String>,
}

/// Vocabulary that splits composite attribute names such as "frame length"
/// into a part ("frame") and a general attribute ("length").
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartLexicon {
    parts: BTreeSet<String>,
    general_attributes: BTreeSet<String>,
    #[serde(skip)]
    longest: usize,
}

impl<'de> Deserialize<'de> for PartLexicon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLexicon::deserialize(d)?;
        PartLexicon::new(raw.parts, raw.general_attributes).map_err(serde::de::Error::custom)
    }
}

impl PartLexicon {
    pub fn new<P, A>(parts: P, general_attributes: A) -> Result<Self>
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        A: IntoIterator,
        A::Item: AsRef<str>,
    {
        let norm = |s: &str| normalize_label(s);
        let parts: BTreeSet<String> = parts
            .into_iter()
            .map(|p| norm(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        let general_attributes: BTreeSet<String> = general_attributes
            .into_iter()
            .map(|a| norm(a.as_ref()))
            .filter(|a| !a.is_empty())
            .collect();
        if let Some(both) = parts.intersection(&general_attributes).next() {
            return Err(Error::Config(format!(
                "`{both}` is listed both as a part and as a general attribute"
            )));
        }
        let longest = parts
            .iter()
            .chain(&general_attributes)
            .map(|l| l.split(' ').count())
            .max()
            .unwrap_or(0);
        Ok(PartLexicon {
            parts,
            general_attributes,
            longest,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn parts(&self) -> &BTreeSet<String> {
        &self.parts
    }

    pub fn general_attributes(&self) -> &BTreeSet<String> {
        &self.general_attributes
    }

    /// Longest span starting at `start` whose joined tokens are in `set`.
    fn longest_match(
        &self,
        tokens: &[&str],
        start: usize,
        set: &BTreeSet<String>,
    ) -> Option<usize> {
        let max = self.longest.min(tokens.len() - start);
        (1..=max)
            .rev()
            .find(|&len| set.contains(&tokens[start..start + len].join(" ")))
    }
}

/// Parts and general attributes recovered from one composite attribute name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subdivision {
    pub parts: BTreeSet<String>,
    pub attributes: BTreeSet<String>,
}

/// Splits an attribute name into parts and general attributes.
///
/// Part labels are matched first, greedily longest-first from the left; the
/// tokens left over are matched against general attribute labels the same
/// way. Tokens matching neither are ignored. Returns `None` unless both sides
/// are nonempty.
pub fn subdivide(attribute: &str, lex: &PartLexicon) -> Option<Subdivision> {
    let attribute = normalize_label(attribute);
    let tokens: Vec<&str> = attribute.split(' ').filter(|t| !t.is_empty()).collect();
    let mut claimed = vec![false; tokens.len()];

    let mut parts = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        match lex.longest_match(&tokens, i, &lex.parts) {
            Some(len) => {
                parts.insert(tokens[i..i + len].join(" "));
                claimed[i..i + len].fill(true);
                i += len;
            }
            None => i += 1,
        }
    }
    if parts.is_empty() {
        return None;
    }

    let mut attributes = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        if claimed[i] {
            i += 1;
            continue;
        }
        let run_end = (i..tokens.len())
            .find(|&j| claimed[j])
            .unwrap_or(tokens.len());
        match lex.longest_match(&tokens[..run_end], i, &lex.general_attributes) {
            Some(len) => {
                attributes.insert(tokens[i..i + len].join(" "));
                i += len;
            }
            None => i += 1,
        }
    }
    if attributes.is_empty() {
        return None;
    }
    Some(Subdivision { parts, attributes })
}

/// One element of a hierarchicalized attribute set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyElement {
    Direct(String),
    Part(String),
    PartAttribute { part: String, attribute: String },
}

/// Attributes of one entity after hierarchicalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalAttributeSet {
    pub entity: String,
    /// Attributes that stay on the entity itself.
    pub direct: BTreeSet<String>,
    /// Parts linked to the entity.
    pub parts: BTreeSet<String>,
    /// General attributes linked under each part.
    pub part_attributes: BTreeMap<String, BTreeSet<String>>,
    /// Input attributes each output element came from.
    pub origin: BTreeMap<HierarchyElement, BTreeSet<String>>,
    /// How each subdivided input attribute was split.
    pub composites: BTreeMap<String, Subdivision>,
}

impl HierarchicalAttributeSet {
    pub fn is_empty(&self) -> bool {
        self.direct.is_empty() && self.parts.is_empty()
    }

    /// Every output element, in canonical order.
    pub fn elements(&self) -> impl Iterator<Item = &HierarchyElement> {
        self.origin.keys()
    }
}

/// Decomposes an entity's attributes into direct attributes and part-level
/// attributes. A general attribute is linked to a part exactly when both
/// came out of the same composite input.
pub fn hierarchicalize<I>(
    entity: &str,
    attributes: I,
    lex: &PartLexicon,
) -> HierarchicalAttributeSet
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut out = HierarchicalAttributeSet {
        entity: entity.to_string(),
        ..Default::default()
    };
    let inputs: BTreeSet<String> = attributes
        .into_iter()
        .map(|a| a.as_ref().to_string())
        .collect();
    for a in inputs {
        let mut note = |el: HierarchyElement, origin: &str| {
            out.origin.entry(el).or_default().insert(origin.to_string());
        };
        match subdivide(&a, lex) {
            Some(sub) => {
                for p in &sub.parts {
                    out.parts.insert(p.clone());
                    note(HierarchyElement::Part(p.clone()), &a);
                    for ap in &sub.attributes {
                        out.part_attributes
                            .entry(p.clone())
                            .or_default()
                            .insert(ap.clone());
                        note(
                            HierarchyElement::PartAttribute {
                                part: p.clone(),
                                attribute: ap.clone(),
                            },
                            &a,
                        );
                    }
                }
                out.composites.insert(a, sub);
            }
            None => {
                out.direct.insert(a.clone());
                note(HierarchyElement::Direct(a.clone()), &a);
            }
        }
    }
    out
}
