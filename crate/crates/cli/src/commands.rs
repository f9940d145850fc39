use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use scene_mmkg::kg::{self, write_file_atomically, SceneMmkg, Tail};
use scene_mmkg::populate::{populate_from_files, write_rejects, PopulateOptions, RelationPolicy};
use scene_mmkg::providers::{Embedder, EmbeddingVector, Provider};
use scene_mmkg::refine::{qcr, CdfSeries, PartLexicon};
use scene_mmkg::schema::{
    cluster_concepts, expand_concepts, mine_concepts, LexicalKb, SceneProfile, SceneSchema,
    DEFAULT_TEMPLATE,
};
use scene_mmkg::skr::{
    self, EntityIndex, FeatureMatrix, GcnParameters, Query, RetrievedSubgraph, ScoredEntity,
};
use scene_mmkg::Error;
use serde::Serialize;

use crate::config::{require, PipelineConfig};
use crate::{Command, ExportFormat, MatrixFormat, QueryArgs};

pub(crate) fn run(command: Command, cfg: &PipelineConfig) -> Result<()> {
    match command {
        Command::Schema => schema(cfg),
        Command::Populate => populate(cfg),
        Command::Refine { cdf_csv } => refine(cfg, cdf_csv.as_deref()),
        Command::Stats { graph } => stats(graph.as_deref().unwrap_or(&cfg.graph_dir)),
        Command::Retrieve(args) => retrieve(cfg, &args),
        Command::Encode {
            query,
            params,
            format,
            pool,
        } => encode(cfg, &query, params, format, pool),
        Command::Export {
            graph,
            format,
            output,
        } => export(
            graph.as_deref().unwrap_or(&cfg.refined_dir),
            format,
            &output,
        ),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Writes `body` atomically to `path`, or to stdout when there is no path.
fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => Ok(write_file_atomically(p, body.as_bytes())?),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn schema(cfg: &PipelineConfig) -> Result<()> {
    let profile_path = require("scene_profile", cfg.scene_profile.as_ref())?;
    let template_path = cfg
        .template
        .as_ref()
        .map(|p| require("template", Some(p)))
        .transpose()?;
    let lex_path = cfg
        .lexical_kb
        .as_ref()
        .map(|p| require("lexical_kb", Some(p)))
        .transpose()?;

    let profile = SceneProfile::load(&profile_path)?;
    let template = match template_path {
        Some(p) => std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let lex = match lex_path {
        Some(p) => LexicalKb::load(&p)?,
        None => LexicalKb::default(),
    };
    let llm = Provider::new(cfg.llm.clone())?;
    let embedder = Provider::new(cfg.embedding.clone())?;

    let raw = mine_concepts(&profile, &template, &llm).context("mining scene concepts")?;
    let expanded = expand_concepts(&raw, &lex, cfg.max_depth);
    let schema = cluster_concepts(
        &profile.scene,
        &expanded,
        cfg.thresholds.gamma1,
        &embedder,
        &lex,
    )?;
    write_file_atomically(&cfg.schema_path, schema.to_json().as_bytes())?;
    log::info!("wrote {}", cfg.schema_path.display());

    emit(
        None,
        &to_json(&serde_json::json!({
            "scene": schema.scene,
            "raw_concepts": raw.len(),
            "expanded_concepts": expanded.len(),
            "canonical_concepts": schema.concepts.len(),
            "hierarchy_edges": schema.hierarchy.len(),
        })),
    )
}

fn populate(cfg: &PipelineConfig) -> Result<()> {
    let schema_path = require("schema_path", Some(&cfg.schema_path))?;
    let general = require("general_records", cfg.general_records.as_ref())?;
    let scene = require("scene_records", cfg.scene_records.as_ref())?;
    let policy = match &cfg.relation_policy {
        Some(p) => RelationPolicy::load(&require("relation_policy", Some(p))?)?,
        None => RelationPolicy::default(),
    };

    let schema = SceneSchema::load(&schema_path)?;
    let options = PopulateOptions {
        asset_root: cfg.asset_root.clone(),
    };
    let population = populate_from_files(&schema, &general, &scene, &policy, &options)?;
    kg::save(&population.graph, &cfg.graph_dir)?;
    if let Some(log) = &cfg.reject_log {
        write_file_atomically(log, write_rejects(&population.rejects).as_bytes())?;
    }
    if !population.rejects.is_empty() {
        log::warn!("{} records rejected", population.rejects.len());
    }
    emit(
        None,
        &to_json(&serde_json::json!({
            "stats": population.graph.stats(),
            "rejected": population.rejects.len(),
        })),
    )
}

fn cdf_rows(w: &mut csv::Writer<Vec<u8>>, stage: &str, series: &CdfSeries) -> Result<()> {
    for p in &series.points {
        w.write_record([
            stage.to_string(),
            p.rank.to_string(),
            p.attribute.clone(),
            p.frequency.to_string(),
            p.cumulative_fraction.to_string(),
        ])?;
    }
    Ok(())
}

fn refine(cfg: &PipelineConfig, cdf_csv: Option<&Path>) -> Result<()> {
    let lex = match &cfg.part_lexicon {
        Some(p) => PartLexicon::load(&require("part_lexicon", Some(p))?)?,
        None => PartLexicon::default(),
    };
    let graph = kg::load(&cfg.graph_dir)?;
    let embedder = Provider::new(cfg.embedding.clone())?;
    let (refined, report) = qcr(&graph, &lex, cfg.thresholds.gamma2, &embedder)?;

    kg::save(&refined, &cfg.refined_dir)?;
    write_file_atomically(&cfg.report_path, report.to_json().as_bytes())?;
    if let Some(path) = cdf_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "stage",
            "rank",
            "attribute",
            "frequency",
            "cumulative_fraction",
        ])?;
        cdf_rows(&mut w, "before", &report.cdf_before)?;
        cdf_rows(&mut w, "hierarchicalized", &report.cdf_hierarchicalized)?;
        cdf_rows(&mut w, "after", &report.cdf_after)?;
        write_file_atomically(path, &w.into_inner()?)?;
    }
    emit(
        None,
        &to_json(&serde_json::json!({
            "edges_before": report.edges_before,
            "edges_after": report.edges_after,
            "distinct_attrs_before": report.distinct_attrs_before,
            "distinct_attrs_after": report.distinct_attrs_after,
        })),
    )
}

fn stats(dir: &Path) -> Result<()> {
    let graph = kg::load(dir)?;
    emit(
        None,
        &to_json(&serde_json::json!({
            "frozen": graph.is_frozen(),
            "stats": graph.stats(),
            "build_log": graph.build_log(),
        })),
    )
}

fn graph_dir(args: &QueryArgs, cfg: &PipelineConfig) -> PathBuf {
    args.graph
        .clone()
        .unwrap_or_else(|| cfg.refined_dir.clone())
}

fn observation(args: &QueryArgs, embedder: &Provider) -> Result<Option<EmbeddingVector>> {
    match (&args.observation, &args.observation_text) {
        (Some(_), Some(_)) => bail!(Error::Config(
            "pass either --observation or --observation-text, not both".into()
        )),
        (Some(raw), None) => {
            let text = if raw.trim_start().starts_with('[') {
                raw.clone()
            } else {
                let p = Path::new(raw);
                std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?
            };
            let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("observation is not a JSON number array: {e}"))
            })?;
            Ok(Some(EmbeddingVector::raw(values)))
        }
        (None, Some(t)) => Ok(Some(embedder.embed(t)?)),
        (None, None) => Ok(None),
    }
}

#[derive(Serialize)]
struct Retrieval {
    hits: Vec<ScoredEntity>,
    /// Threshold applied to visual knowledge, when an observation was given.
    gamma3: Option<f64>,
    subgraph: RetrievedSubgraph,
}

fn run_query(cfg: &PipelineConfig, args: &QueryArgs) -> Result<(SceneMmkg, Provider, Retrieval)> {
    let graph = kg::load(&graph_dir(args, cfg))?;
    let embedder = Provider::new(cfg.embedding.clone())?;
    let obs = observation(args, &embedder)?;
    let query = Query {
        text: args.query.clone(),
        observation: obs.clone(),
        k: args.k,
    };
    let index = EntityIndex::build(&graph, &embedder)?;
    let hits = index.top_k(&query.vector(&embedder)?, query.k)?;
    let anchors: Vec<_> = hits.iter().map(|h| h.id.clone()).collect();
    let mut subgraph = skr::expand(&anchors, &graph, args.hops)?;
    subgraph.anchor_scores = hits.iter().map(|h| (h.id.clone(), h.score)).collect();

    let gamma3 = match obs {
        Some(o) => {
            let g = args.gamma3.unwrap_or(cfg.thresholds.gamma3);
            subgraph = skr::denoise(&subgraph, &o, g, &graph, &embedder)?;
            Some(g)
        }
        None => None,
    };
    Ok((
        graph,
        embedder,
        Retrieval {
            hits,
            gamma3,
            subgraph,
        },
    ))
}

fn retrieve(cfg: &PipelineConfig, args: &QueryArgs) -> Result<()> {
    let (_, _, result) = run_query(cfg, args)?;
    emit(args.output.as_deref(), &to_json(&result))
}

#[derive(Serialize)]
struct Encoding {
    anchors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pooled: Option<Vec<f64>>,
    features: FeatureMatrix,
}

fn encode(
    cfg: &PipelineConfig,
    args: &QueryArgs,
    params: Option<PathBuf>,
    format: MatrixFormat,
    pool: bool,
) -> Result<()> {
    let params_path = require("gcn_params", params.as_ref().or(cfg.gcn_params.as_ref()))?;
    let params = GcnParameters::load(&params_path)?;
    let (graph, embedder, result) = run_query(cfg, args)?;
    let features = skr::encode(&result.subgraph, &graph, &params, &embedder)?;
    let body = match format {
        MatrixFormat::Csv => {
            if pool {
                bail!(Error::Config("--pool needs JSON output".into()));
            }
            features.to_csv()
        }
        MatrixFormat::Json => {
            let anchors: Vec<String> = result
                .subgraph
                .anchors
                .iter()
                .map(|a| a.to_string())
                .collect();
            let pooled = pool.then(|| features.mean_pool(&anchors)).transpose()?;
            to_json(&Encoding {
                anchors,
                pooled,
                features,
            })
        }
    };
    emit(args.output.as_deref(), &body)
}

fn source_name(source: kg::Source) -> String {
    match serde_json::to_value(source).expect("source serializes") {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

fn export(dir: &Path, format: ExportFormat, output: &Path) -> Result<()> {
    let graph = kg::load(dir)?;
    match format {
        ExportFormat::Jsonl => {
            kg::save(&graph, output)?;
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "head_id",
                "head",
                "relation",
                "tail_kind",
                "tail_id",
                "tail",
                "source",
                "provenance",
            ])?;
            for t in graph.triples() {
                let head = graph.entity(&t.head).map_or("", |e| e.label.as_str());
                let (kind, tail_id) = match &t.tail {
                    Tail::Entity(id) => ("entity", id.to_string()),
                    Tail::Literal(_) => ("literal", String::new()),
                    Tail::Image(id) => ("image", id.to_string()),
                };
                let provenance: Vec<&str> = t.provenance.iter().map(String::as_str).collect();
                w.write_record([
                    t.head.as_str(),
                    head,
                    &t.relation,
                    kind,
                    &tail_id,
                    graph.tail_text(&t.tail),
                    &source_name(t.source),
                    &provenance.join(";"),
                ])?;
            }
            write_file_atomically(output, &w.into_inner()?)?;
        }
    }
    emit(
        None,
        &to_json(&serde_json::json!({ "exported": output, "triples": graph.stats().edges })),
    )
}
