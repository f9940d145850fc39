#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_scene-mmkg")
}

pub fn kitchen() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/kitchen")
}

pub fn kitchen_config() -> PathBuf {
    kitchen().join("config.json")
}

/// Runs the binary against the kitchen config with every output redirected
/// under `out`.
pub fn run(out: &Path, args: &[&str]) -> Output {
    let p = |name: &str| out.join(name).to_string_lossy().into_owned();
    let config = kitchen_config();
    Command::new(bin())
        .arg("--config")
        .arg(&config)
        .args(["--schema_path", &p("schema.json")])
        .args(["--graph_dir", &p("graph")])
        .args(["--refined_dir", &p("refined")])
        .args(["--report_path", &p("qcr_report.json")])
        .args(["--reject_log", &p("rejects.jsonl")])
        .args(args)
        .env_remove("SCENE_MMKG_PROVIDER")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn run_ok(out: &Path, args: &[&str]) -> Output {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed with {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

/// Every stage of the pipeline, in order.
pub fn full_pipeline(out: &Path) -> Vec<Output> {
    let p = |name: &str| out.join(name).to_string_lossy().into_owned();
    let refined = p("refined");
    vec![
        run_ok(out, &["schema"]),
        run_ok(out, &["populate"]),
        run_ok(out, &["refine", "--cdf-csv", &p("cdf.csv")]),
        run_ok(out, &["stats", &refined]),
        run_ok(
            out,
            &[
                "retrieve",
                "--query",
                "mug",
                "--k",
                "3",
                "--observation-text",
                "white ceramic mug",
                "--output",
                &p("retrieve.json"),
            ],
        ),
        run_ok(
            out,
            &[
                "encode",
                "--query",
                "mug",
                "--k",
                "2",
                "--pool",
                "--output",
                &p("encode.json"),
            ],
        ),
        run_ok(
            out,
            &[
                "export",
                "--graph",
                &refined,
                "--format",
                "csv",
                "--output",
                &p("triples.csv"),
            ],
        ),
    ]
}

/// Relative path to contents of every file below `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}
