use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RetrievedSubgraph;
use crate::error::{Error, Result};
use crate::kg::{SceneMmkg, Tail};
use crate::providers::Embedder;
use crate::text::stable_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// Weights of an `n`-layer graph convolution. Layer `m` maps `dims[m]`
/// features to `dims[m + 1]`; its weight matrix is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcnParameters {
    pub n: usize,
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
}

impl GcnParameters {
    /// `n` layers of `d x d` identity weights.
    pub fn identity(n: usize, d: usize, activation: Activation) -> Self {
        let eye: Vec<f64> = (0..d * d)
            .map(|i| if i / d == i % d { 1.0 } else { 0.0 })
            .collect();
        GcnParameters {
            n,
            dims: vec![d; n + 1],
            activation,
            weights: vec![eye; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.n + 1 {
            return Err(Error::Config(format!(
                "{} layers need {} dims, got {}",
                self.n,
                self.n + 1,
                self.dims.len()
            )));
        }
        if self.weights.len() != self.n {
            return Err(Error::Config(format!(
                "{} layers need {} weight matrices, got {}",
                self.n,
                self.n,
                self.weights.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        for (m, w) in self.weights.iter().enumerate() {
            let want = self.dims[m] * self.dims[m + 1];
            if w.len() != want {
                return Err(Error::Config(format!(
                    "layer {m} weights hold {} values, expected {want}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("layer {m} has non-finite weights")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: GcnParameters =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        params.validate()?;
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated dims")
    }

    fn layer(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dims[m], self.dims[m + 1], &self.weights[m])
    }
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^-1/2 (A + I) D^-1/2`, for an undirected simple graph. Self-edges and
/// repeated edges in `edges` collapse into the single self-loop / edge.
pub fn normalized_adjacency(nodes: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::identity(nodes, nodes);
    for &(i, j) in edges {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let inv_sqrt: Vec<f64> = a.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    DMatrix::from_fn(nodes, nodes, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

/// Runs the layer stack `H <- act(Â H W_m)` over a graph given by node
/// indices.
pub fn propagate(
    nodes: usize,
    edges: &[(usize, usize)],
    h0: DMatrix<f64>,
    params: &GcnParameters,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    if h0.nrows() != nodes {
        return Err(Error::Contract(format!(
            "{nodes} nodes but {} feature rows",
            h0.nrows()
        )));
    }
    if h0.ncols() != params.input_dim() {
        return Err(Error::Contract(format!(
            "features have dimension {}, first layer expects {}",
            h0.ncols(),
            params.input_dim()
        )));
    }
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= nodes || j >= nodes) {
        return Err(Error::Contract(format!(
            "edge ({i}, {j}) outside {nodes} nodes"
        )));
    }
    let a_hat = normalized_adjacency(nodes, edges);
    let mut h = h0;
    for m in 0..params.n {
        h = (&a_hat * &h * params.layer(m)).map(|x| params.activation.apply(x));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "graph convolution produced non-finite features".into(),
        ));
    }
    Ok(h)
}

/// Node features in canonical order (sorted node ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub node_ids: Vec<String>,
    pub node_labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, node_id: &str) -> Option<&[f64]> {
        let i = self
            .node_ids
            .binary_search_by(|n| n.as_str().cmp(node_id))
            .ok()?;
        Some(&self.rows[i])
    }

    /// Mean of the rows of `node_ids`; unknown ids are errors.
    pub fn mean_pool<S: AsRef<str>>(&self, node_ids: &[S]) -> Result<Vec<f64>> {
        if node_ids.is_empty() {
            return Err(Error::Precondition("nothing to pool".into()));
        }
        let mut acc = vec![0.0; self.dim()];
        for id in node_ids {
            let row = self.row(id.as_ref()).ok_or_else(|| {
                Error::Lookup(format!("node {} not in feature matrix", id.as_ref()))
            })?;
            acc.iter_mut().zip(row).for_each(|(a, r)| *a += r);
        }
        let n = node_ids.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header =
            std::iter::once("node_id".to_string()).chain((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(header).expect("in-memory write");
        for (id, row) in self.node_ids.iter().zip(&self.rows) {
            let record = std::iter::once(id.clone()).chain(row.iter().map(f64::to_string));
            w.write_record(record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("matrix serializes");
        s.push('\n');
        s
    }
}

/// Node id used for a literal tail in the feature matrix.
pub fn literal_node_id(text: &str) -> String {
    stable_id("literal", &[text])
}

/// Encodes a retrieved subgraph into per-node features.
///
/// Nodes are the anchors plus every head and tail of the remaining triples;
/// edges are the triples taken as undirected and untyped. Initial features
/// embed each node's text (entity label, literal, image caption or file
/// name).
pub fn encode<E: Embedder + ?Sized>(
    subgraph: &RetrievedSubgraph,
    graph: &SceneMmkg,
    params: &GcnParameters,
    embedder: &E,
) -> Result<FeatureMatrix> {
    params.validate()?;
    if params.input_dim() != embedder.dimension() {
        return Err(Error::Contract(format!(
            "first layer expects dimension {}, embedder produces {}",
            params.input_dim(),
            embedder.dimension()
        )));
    }

    let mut nodes: BTreeMap<String, String> = BTreeMap::new();
    let mut node_of = |tail: &Tail| -> Result<String> {
        let (id, text) = match tail {
            Tail::Entity(id) => {
                let e = graph
                    .entity(id)
                    .ok_or_else(|| Error::Lookup(format!("unknown entity {id}")))?;
                (id.to_string(), e.label.clone())
            }
            Tail::Literal(s) => (literal_node_id(s), s.clone()),
            Tail::Image(id) => {
                let a = graph
                    .asset(id)
                    .ok_or_else(|| Error::Lookup(format!("unknown asset {id}")))?;
                (id.to_string(), a.describe().to_string())
            }
        };
        nodes.entry(id.clone()).or_insert(text);
        Ok(id)
    };

    let mut raw_edges = Vec::new();
    for a in &subgraph.anchors {
        node_of(&Tail::Entity(a.clone()))?;
    }
    for t in subgraph.textual.iter().chain(&subgraph.visual) {
        let h = node_of(&Tail::Entity(t.head.clone()))?;
        let tl = node_of(&t.tail)?;
        raw_edges.push((h, tl));
    }
    if nodes.is_empty() {
        return Err(Error::Precondition(
            "cannot encode an empty subgraph".into(),
        ));
    }

    let index: BTreeMap<&str, usize> = nodes
        .keys()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    let edges: Vec<(usize, usize)> = raw_edges
        .iter()
        .map(|(h, t)| (index[h.as_str()], index[t.as_str()]))
        .collect();
    let d = params.input_dim();
    let mut h0 = DMatrix::<f64>::zeros(nodes.len(), d);
    for (i, text) in nodes.values().enumerate() {
        let v = embedder.embed(text)?;
        if v.dim() != d {
            return Err(Error::Contract(format!(
                "embedding of `{text}` has dimension {}",
                v.dim()
            )));
        }
        h0.row_mut(i).copy_from_slice(&v.values);
    }

    let out = propagate(nodes.len(), &edges, h0, params)?;
    Ok(FeatureMatrix {
        node_ids: nodes.keys().cloned().collect(),
        node_labels: nodes.into_values().collect(),
        rows: out
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
    })
}
