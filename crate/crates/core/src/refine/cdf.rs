use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kg::SceneMmkg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub rank: usize,
    pub attribute: String,
    pub frequency: u64,
    pub cumulative_fraction: f64,
}

/// Cumulative share of attribute usage, most frequent attribute first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub points: Vec<CdfPoint>,
}

impl CdfSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cumulative fraction covered by the top `rank` attributes (1-based).
    /// Ranks past the end report the total; rank 0 covers nothing.
    pub fn at_rank(&self, rank: usize) -> f64 {
        match rank {
            0 => 0.0,
            r => self
                .points
                .get(r.min(self.points.len()).wrapping_sub(1))
                .map_or(0.0, |p| p.cumulative_fraction),
        }
    }

    /// True when this series covers at least as much mass as `other` at
    /// every rank both series share.
    pub fn dominates(&self, other: &CdfSeries) -> bool {
        let shared = self.len().min(other.len());
        (1..=shared).all(|r| self.at_rank(r) >= other.at_rank(r))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "attribute", "frequency", "cumulative_fraction"])
            .expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.rank.to_string(),
                p.attribute.clone(),
                p.frequency.to_string(),
                p.cumulative_fraction.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Sorts frequencies descending (ties by name) and accumulates their share.
/// An all-zero or empty input yields an empty series.
pub fn cdf_from_frequencies(frequencies: &BTreeMap<String, u64>) -> CdfSeries {
    let total: u64 = frequencies.values().sum();
    if total == 0 {
        return CdfSeries::default();
    }
    let mut ranked: Vec<(&String, u64)> = frequencies.iter().map(|(k, v)| (k, *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut running = 0u64;
    let points = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (name, f))| {
            running += f;
            CdfPoint {
                rank: i + 1,
                attribute: name.clone(),
                frequency: f,
                cumulative_fraction: running as f64 / total as f64,
            }
        })
        .collect();
    CdfSeries { points }
}

/// Usage count of each canonical attribute key, counted in triples.
pub fn attribute_frequencies(graph: &SceneMmkg) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for t in graph.triples() {
        if let Ok(key) = graph.canonical_attribute(&t.relation) {
            *freq.entry(key.name.clone()).or_insert(0) += 1;
        }
    }
    freq
}

pub fn attribute_cdf(graph: &SceneMmkg) -> CdfSeries {
    cdf_from_frequencies(&attribute_frequencies(graph))
}
