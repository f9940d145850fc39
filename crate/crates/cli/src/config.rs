use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use scene_mmkg::providers::{ProviderConfig, ProviderMode};
use scene_mmkg::schema::{DEFAULT_GAMMA1, DEFAULT_MAX_DEPTH};
use scene_mmkg::{refine::DEFAULT_GAMMA2, skr::DEFAULT_GAMMA3, Error};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "gamma1")]
    pub gamma1: f64,
    #[serde(default = "gamma2")]
    pub gamma2: f64,
    #[serde(default = "gamma3")]
    pub gamma3: f64,
}

fn gamma1() -> f64 {
    DEFAULT_GAMMA1
}
fn gamma2() -> f64 {
    DEFAULT_GAMMA2
}
fn gamma3() -> f64 {
    DEFAULT_GAMMA3
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gamma1: DEFAULT_GAMMA1,
            gamma2: DEFAULT_GAMMA2,
            gamma3: DEFAULT_GAMMA3,
        }
    }
}

/// Every knob of a pipeline run. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub scene_profile: Option<PathBuf>,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub lexical_kb: Option<PathBuf>,
    #[serde(default)]
    pub part_lexicon: Option<PathBuf>,
    #[serde(default)]
    pub general_records: Option<PathBuf>,
    #[serde(default)]
    pub scene_records: Option<PathBuf>,
    #[serde(default)]
    pub relation_policy: Option<PathBuf>,
    #[serde(default)]
    pub asset_root: Option<PathBuf>,
    #[serde(default)]
    pub gcn_params: Option<PathBuf>,
    #[serde(default)]
    pub llm: ProviderConfig,
    #[serde(default)]
    pub embedding: ProviderConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "max_depth")]
    pub max_depth: usize,
    #[serde(default = "schema_path")]
    pub schema_path: PathBuf,
    #[serde(default = "graph_dir")]
    pub graph_dir: PathBuf,
    #[serde(default = "refined_dir")]
    pub refined_dir: PathBuf,
    #[serde(default = "report_path")]
    pub report_path: PathBuf,
    #[serde(default)]
    pub reject_log: Option<PathBuf>,
}

fn max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}
fn schema_path() -> PathBuf {
    "out/schema.json".into()
}
fn graph_dir() -> PathBuf {
    "out/graph".into()
}
fn refined_dir() -> PathBuf {
    "out/refined".into()
}
fn report_path() -> PathBuf {
    "out/qcr_report.json".into()
}

/// Flags overriding config fields; each is named after the field it sets.
/// Paths given here are relative to the working directory.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long = "scene_profile", global = true, value_name = "PATH")]
    scene_profile: Option<PathBuf>,
    #[arg(long = "template", global = true, value_name = "PATH")]
    template: Option<PathBuf>,
    #[arg(long = "lexical_kb", global = true, value_name = "PATH")]
    lexical_kb: Option<PathBuf>,
    #[arg(long = "part_lexicon", global = true, value_name = "PATH")]
    part_lexicon: Option<PathBuf>,
    #[arg(long = "general_records", global = true, value_name = "PATH")]
    general_records: Option<PathBuf>,
    #[arg(long = "scene_records", global = true, value_name = "PATH")]
    scene_records: Option<PathBuf>,
    #[arg(long = "relation_policy", global = true, value_name = "PATH")]
    relation_policy: Option<PathBuf>,
    #[arg(long = "asset_root", global = true, value_name = "PATH")]
    asset_root: Option<PathBuf>,
    #[arg(long = "gcn_params", global = true, value_name = "PATH")]
    gcn_params: Option<PathBuf>,
    #[arg(long = "schema_path", global = true, value_name = "PATH")]
    schema_path: Option<PathBuf>,
    #[arg(long = "graph_dir", global = true, value_name = "PATH")]
    graph_dir: Option<PathBuf>,
    #[arg(long = "refined_dir", global = true, value_name = "PATH")]
    refined_dir: Option<PathBuf>,
    #[arg(long = "report_path", global = true, value_name = "PATH")]
    report_path: Option<PathBuf>,
    #[arg(long = "reject_log", global = true, value_name = "PATH")]
    reject_log: Option<PathBuf>,
    #[arg(long = "max_depth", global = true, value_name = "N")]
    max_depth: Option<usize>,
    #[arg(long = "thresholds.gamma1", global = true, value_name = "X")]
    thresholds_gamma1: Option<f64>,
    #[arg(long = "thresholds.gamma2", global = true, value_name = "X")]
    thresholds_gamma2: Option<f64>,
    #[arg(
        long = "thresholds.gamma3",
        global = true,
        value_name = "X",
        allow_hyphen_values = true
    )]
    thresholds_gamma3: Option<f64>,
    #[arg(long = "llm.mode", global = true, value_name = "MODE")]
    llm_mode: Option<String>,
    #[arg(long = "llm.endpoint", global = true, value_name = "URL")]
    llm_endpoint: Option<String>,
    #[arg(long = "llm.fixture_path", global = true, value_name = "PATH")]
    llm_fixture_path: Option<PathBuf>,
    #[arg(long = "llm.timeout_ms", global = true, value_name = "MS")]
    llm_timeout_ms: Option<u64>,
    #[arg(long = "llm.max_retries", global = true, value_name = "N")]
    llm_max_retries: Option<u32>,
    #[arg(long = "embedding.mode", global = true, value_name = "MODE")]
    embedding_mode: Option<String>,
    #[arg(long = "embedding.endpoint", global = true, value_name = "URL")]
    embedding_endpoint: Option<String>,
    #[arg(long = "embedding.timeout_ms", global = true, value_name = "MS")]
    embedding_timeout_ms: Option<u64>,
    #[arg(long = "embedding.max_retries", global = true, value_name = "N")]
    embedding_max_retries: Option<u32>,
    #[arg(long = "embedding.dimension", global = true, value_name = "D")]
    embedding_dimension: Option<usize>,
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Reads the config file (or starts from defaults when there is none),
    /// applies flag overrides and the provider-mode environment variable,
    /// then validates.
    pub fn assemble(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let cwd = std::env::current_dir().context("reading working directory")?;
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let config: PipelineConfig =
                    serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
                let dir = path.parent().map_or(cwd.clone(), |p| absolutize(&cwd, p));
                config.resolve_paths(&dir)
            }
            None => serde_json::from_str::<PipelineConfig>("{}")
                .expect("defaults deserialize")
                .resolve_paths(&cwd),
        };
        config.apply(overrides, &cwd)?;
        config.llm = config.llm.clone().with_env_override()?;
        config.embedding = config.embedding.clone().with_env_override()?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(mut self, base: &Path) -> Self {
        for p in [
            &mut self.scene_profile,
            &mut self.template,
            &mut self.lexical_kb,
            &mut self.part_lexicon,
            &mut self.general_records,
            &mut self.scene_records,
            &mut self.relation_policy,
            &mut self.asset_root,
            &mut self.gcn_params,
            &mut self.reject_log,
        ]
        .into_iter()
        .flatten()
        {
            *p = absolutize(base, p);
        }
        for p in [
            &mut self.schema_path,
            &mut self.graph_dir,
            &mut self.refined_dir,
            &mut self.report_path,
        ] {
            *p = absolutize(base, p);
        }
        self.llm = self.llm.resolve_paths(base);
        self.embedding = self.embedding.resolve_paths(base);
        self
    }

    fn apply(&mut self, o: &Overrides, cwd: &Path) -> Result<()> {
        let abs = |p: &Option<PathBuf>| p.as_deref().map(|p| absolutize(cwd, p));
        macro_rules! set_path {
            ($($field:ident),*) => {$(
                if let Some(p) = abs(&o.$field) {
                    self.$field = Some(p);
                }
            )*};
        }
        set_path!(
            scene_profile,
            template,
            lexical_kb,
            part_lexicon,
            general_records,
            scene_records,
            relation_policy,
            asset_root,
            gcn_params,
            reject_log
        );
        macro_rules! set_out {
            ($($field:ident),*) => {$(
                if let Some(p) = abs(&o.$field) {
                    self.$field = p;
                }
            )*};
        }
        set_out!(schema_path, graph_dir, refined_dir, report_path);

        if let Some(d) = o.max_depth {
            self.max_depth = d;
        }
        if let Some(x) = o.thresholds_gamma1 {
            self.thresholds.gamma1 = x;
        }
        if let Some(x) = o.thresholds_gamma2 {
            self.thresholds.gamma2 = x;
        }
        if let Some(x) = o.thresholds_gamma3 {
            self.thresholds.gamma3 = x;
        }
        apply_provider(
            &mut self.llm,
            o.llm_mode.as_deref(),
            o.llm_endpoint.as_deref(),
            o.llm_timeout_ms,
            o.llm_max_retries,
        )?;
        if let Some(p) = abs(&o.llm_fixture_path) {
            self.llm.fixture_path = Some(p);
        }
        apply_provider(
            &mut self.embedding,
            o.embedding_mode.as_deref(),
            o.embedding_endpoint.as_deref(),
            o.embedding_timeout_ms,
            o.embedding_max_retries,
        )?;
        if let Some(d) = o.embedding_dimension {
            self.embedding.dimension = d;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        for (name, value) in [("gamma1", t.gamma1), ("gamma2", t.gamma2)] {
            if !(0.0..=1.0).contains(&value) {
                bail!(Error::Config(format!(
                    "thresholds.{name} = {value} is outside [0, 1]"
                )));
            }
        }
        if !(-1.0..=1.0).contains(&t.gamma3) {
            bail!(Error::Config(format!(
                "thresholds.gamma3 = {} is outside [-1, 1]",
                t.gamma3
            )));
        }
        self.llm.validate()?;
        self.embedding.validate()?;
        Ok(())
    }
}

fn apply_provider(
    cfg: &mut ProviderConfig,
    mode: Option<&str>,
    endpoint: Option<&str>,
    timeout_ms: Option<u64>,
    max_retries: Option<u32>,
) -> Result<()> {
    if let Some(m) = mode {
        cfg.mode = m.parse::<ProviderMode>()?;
    }
    if let Some(e) = endpoint {
        cfg.endpoint = Some(e.to_string());
    }
    if let Some(t) = timeout_ms {
        cfg.timeout_ms = t;
    }
    if let Some(r) = max_retries {
        cfg.max_retries = r;
    }
    Ok(())
}

/// Fails with a missing-file error naming the first path that is not there.
pub fn require(label: &str, path: Option<&PathBuf>) -> Result<PathBuf> {
    let path = path.ok_or_else(|| Error::Config(format!("config field `{label}` is required")))?;
    if !path.exists() {
        let e = std::io::Error::new(std::io::ErrorKind::NotFound, format!("{label} not found"));
        return Err(Error::io(path, e).into());
    }
    Ok(path.clone())
}
