//! Threshold merging of labels by embedding similarity.
//!
//! Shared by concept clustering and attribute aggregation. Every pass scores
//! all pairs of current clusters, keeps those with similarity at or above the
//! threshold, and merges them highest-similarity first (ties broken by the
//! lexicographic order of the pair's labels). A cluster is represented by the
//! embedding of its canonical label, so a merge never introduces a new
//! vector; passes repeat until one performs no merge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::{cosine, Embedder, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeCluster {
    pub canonical: String,
    /// Every label folded into this cluster, canonical included, sorted.
    pub members: Vec<String>,
}

impl MergeCluster {
    pub fn singleton(label: impl Into<String>) -> Self {
        let label = label.into();
        MergeCluster {
            members: vec![label.clone()],
            canonical: label,
        }
    }

    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.members
            .iter()
            .map(String::as_str)
            .filter(move |m| *m != self.canonical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    /// Clusters sorted by canonical label.
    pub clusters: Vec<MergeCluster>,
    pub merges: usize,
    pub passes: usize,
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Precondition(format!(
            "similarity threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Picks the surviving label of a merge: the hypernym when exactly one label
/// subsumes the other, else the lexicographically smaller label.
pub fn pick_canonical<'a>(
    a: &'a str,
    b: &'a str,
    is_hypernym_of: &dyn Fn(&str, &str) -> bool,
) -> &'a str {
    match (is_hypernym_of(a, b), is_hypernym_of(b, a)) {
        (true, false) => a,
        (false, true) => b,
        _ => a.min(b),
    }
}

/// Merges distinct labels until no pair of clusters reaches `threshold`.
pub fn merge_labels<E: Embedder + ?Sized>(
    labels: impl IntoIterator<Item = String>,
    threshold: f64,
    embedder: &E,
    is_hypernym_of: &dyn Fn(&str, &str) -> bool,
) -> Result<MergeOutcome> {
    let mut seen = BTreeMap::new();
    for l in labels {
        seen.entry(l.clone())
            .or_insert_with(|| MergeCluster::singleton(l));
    }
    merge_clusters(
        seen.into_values().collect(),
        threshold,
        embedder,
        is_hypernym_of,
    )
}

pub fn merge_clusters<E: Embedder + ?Sized>(
    clusters: Vec<MergeCluster>,
    threshold: f64,
    embedder: &E,
    is_hypernym_of: &dyn Fn(&str, &str) -> bool,
) -> Result<MergeOutcome> {
    check_threshold(threshold)?;
    let mut clusters = clusters;
    clusters.sort_by(|a, b| a.canonical.cmp(&b.canonical));
    if clusters
        .windows(2)
        .any(|w| w[0].canonical == w[1].canonical)
    {
        return Err(Error::Contract("duplicate canonical labels".into()));
    }

    let mut vectors: BTreeMap<String, EmbeddingVector> = BTreeMap::new();
    for c in &clusters {
        vectors.insert(c.canonical.clone(), embedder.embed(&c.canonical)?);
    }

    let mut merges = 0;
    let mut passes = 0;
    loop {
        passes += 1;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..clusters.len() {
            let vi = &vectors[&clusters[i].canonical];
            for j in (i + 1)..clusters.len() {
                let sim = cosine(vi, &vectors[&clusters[j].canonical])?;
                if sim >= threshold {
                    pairs.push((sim, i, j));
                }
            }
        }
        if pairs.is_empty() {
            break;
        }
        // Clusters are sorted by label, so (i, j) with i < j orders pairs
        // lexicographically.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

        let mut alive = vec![true; clusters.len()];
        for (_, i, j) in pairs {
            if !(alive[i] && alive[j]) {
                continue;
            }
            let keep_i = pick_canonical(
                &clusters[i].canonical,
                &clusters[j].canonical,
                is_hypernym_of,
            ) == clusters[i].canonical;
            let (win, lose) = if keep_i { (i, j) } else { (j, i) };
            let absorbed = std::mem::take(&mut clusters[lose].members);
            clusters[win].members.extend(absorbed);
            clusters[win].members.sort();
            alive[lose] = false;
            merges += 1;
        }
        let mut idx = 0;
        clusters.retain(|_| {
            idx += 1;
            alive[idx - 1]
        });
    }

    Ok(MergeOutcome {
        clusters,
        merges,
        passes,
    })
}

pub fn no_hypernyms(_: &str, _: &str) -> bool {
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::StaticEmbedder;

    fn injected(vectors: &[(&str, [f64; 2])]) -> StaticEmbedder {
        let mut e = StaticEmbedder::new(2);
        for (label, v) in vectors {
            e.insert(*label, v.to_vec()).unwrap();
        }
        e
    }

    #[test]
    fn hand_computed_merge() {
        let e = injected(&[("c1", [1.0, 0.0]), ("c2", [0.8, 0.6]), ("c3", [0.0, 1.0])]);
        let out =
            merge_labels(["c1", "c2", "c3"].map(String::from), 0.7, &e, &no_hypernyms).unwrap();
        assert_eq!(out.merges, 1);
        assert_eq!(
            out.clusters,
            vec![
                MergeCluster {
                    canonical: "c1".into(),
                    members: vec!["c1".into(), "c2".into()]
                },
                MergeCluster::singleton("c3"),
            ]
        );
    }

    #[test]
    fn hypernym_wins_the_merge() {
        let e = injected(&[("mug", [1.0, 0.0]), ("cup", [0.9, 0.1])]);
        let hyper = |a: &str, b: &str| a == "cup" && b == "mug";
        // "cup" < "mug" anyway; flip the relation to make the rule observable.
        let hyper_flipped = |a: &str, b: &str| a == "mug" && b == "cup";
        let out = merge_labels(["mug", "cup"].map(String::from), 0.7, &e, &hyper).unwrap();
        assert_eq!(out.clusters[0].canonical, "cup");
        let out = merge_labels(["mug", "cup"].map(String::from), 0.7, &e, &hyper_flipped).unwrap();
        assert_eq!(out.clusters[0].canonical, "mug");
        assert_eq!(out.clusters[0].aliases().collect::<Vec<_>>(), vec!["cup"]);
    }

    #[test]
    fn threshold_bounds() {
        let e = injected(&[("a", [1.0, 0.0])]);
        assert!(merge_labels(vec!["a".into()], 1.0 + 1e-9, &e, &no_hypernyms).is_err());
        assert!(merge_labels(vec!["a".into()], -0.1, &e, &no_hypernyms).is_err());
        let out = merge_labels(vec!["a".into()], 0.7, &e, &no_hypernyms).unwrap();
        assert_eq!(out.clusters, vec![MergeCluster::singleton("a")]);
        assert_eq!(out.merges, 0);
    }

    #[test]
    fn threshold_one_keeps_distinct_vectors_apart() {
        let e = injected(&[("a", [1.0, 0.0]), ("b", [0.999, 0.0447])]);
        let out = merge_labels(["a", "b"].map(String::from), 1.0, &e, &no_hypernyms).unwrap();
        assert_eq!(out.clusters.len(), 2);
    }
}
