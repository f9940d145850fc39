//! Label normalization and content-derived identifiers.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// NFC, lowercase, whitespace collapsed to single spaces, trimmed.
pub fn normalize_label(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First 128 bits of SHA-256 over `kind` and `parts`, NUL-separated, as hex.
pub fn stable_id(kind: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(kind.as_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..16])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $kind:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn derive(parts: &[&str]) -> Self {
                $name(stable_id($kind, parts))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

id_newtype!(
    /// Identifier of a graph entity.
    EntityId,
    "entity"
);
id_newtype!(
    /// Identifier of a registered image asset.
    AssetId,
    "asset"
);
id_newtype!(
    /// Identifier of a schema concept.
    ConceptId,
    "concept"
);
id_newtype!(AttributeId, "attribute");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_label("  Frame\t  LENGTH \n"), "frame length");
        // Decomposed e + combining acute composes to U+00E9.
        assert_eq!(normalize_label("Cafe\u{301}"), "caf\u{e9}");
        assert_eq!(normalize_label("   "), "");
    }

    #[test]
    fn ids_are_stable_and_kind_separated() {
        let a = stable_id("entity", &["mug"]);
        assert_eq!(a.len(), 32);
        assert_eq!(a, stable_id("entity", &["mug"]));
        assert_ne!(a, stable_id("asset", &["mug"]));
        assert_ne!(stable_id("x", &["ab", "c"]), stable_id("x", &["a", "bc"]));
        assert_eq!(EntityId::derive(&["mug"]).0, a);
    }
}
