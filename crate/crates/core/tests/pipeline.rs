//! The kitchen fixture driven through the library API end to end.

use std::path::{Path, PathBuf};

use scene_mmkg::kg::{self, Source};
use scene_mmkg::populate::{populate_from_files, PopulateOptions, RelationPolicy};
use scene_mmkg::providers::Embedder;
use scene_mmkg::providers::{Provider, ProviderConfig};
use scene_mmkg::refine::{qcr, PartLexicon, DEFAULT_GAMMA2};
use scene_mmkg::schema::{
    cluster_concepts, expand_concepts, mine_concepts, LexicalKb, SceneProfile, DEFAULT_GAMMA1,
    DEFAULT_MAX_DEPTH,
};
use scene_mmkg::skr::{denoise, encode, retrieve_subgraph, GcnParameters, Query, DEFAULT_GAMMA3};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/kitchen")
        .join(name)
}

fn provider() -> Provider {
    Provider::new(ProviderConfig::fixture(Some(fixture("llm_fixture.json")))).unwrap()
}

#[test]
fn kitchen_fixture_builds_refines_and_answers_queries() {
    let p = provider();
    let profile = SceneProfile::load(&fixture("profiles.json")).unwrap();
    let template = std::fs::read_to_string(fixture("template.txt")).unwrap();
    let lex = LexicalKb::load(&fixture("lexical_kb.json")).unwrap();

    let raw = mine_concepts(&profile, &template, &p).unwrap();
    let expanded = expand_concepts(&raw, &lex, DEFAULT_MAX_DEPTH);
    assert!(expanded.len() > raw.len());
    let schema = cluster_concepts(&profile.scene, &expanded, DEFAULT_GAMMA1, &p, &lex).unwrap();
    assert!(schema.concepts.len() < expanded.len());
    // Plural surface forms fold into their singular concept.
    assert_eq!(schema.resolve("chairs").unwrap().label, "chair");
    assert!(schema.resolve("carburetor").is_none());

    let policy = RelationPolicy::load(&fixture("relation_policy.json")).unwrap();
    let options = PopulateOptions {
        asset_root: Some(fixture("")),
    };
    let pop = populate_from_files(
        &schema,
        &fixture("general.jsonl"),
        &fixture("scene.jsonl"),
        &policy,
        &options,
    )
    .unwrap();
    assert!(pop.graph.is_frozen());
    assert_eq!(pop.rejects.len(), 4);
    kg::verify_asset_files(&pop.graph, &fixture("")).unwrap();
    assert!(pop.graph.assets().any(|a| a.checksum.is_some()));

    let parts = PartLexicon::load(&fixture("part_lexicon.json")).unwrap();
    let (refined, report) = qcr(&pop.graph, &parts, DEFAULT_GAMMA2, &p).unwrap();
    assert!(report.edges_after < report.edges_before);
    assert!(report.distinct_attrs_after < report.distinct_attrs_before);
    assert!(report.parts_created > 0);
    assert!(report.cdf_after.dominates(&report.cdf_before));

    let dir = tempfile::tempdir().unwrap();
    kg::save(&refined, dir.path()).unwrap();
    let loaded = kg::load(dir.path()).unwrap();
    assert_eq!(loaded, refined);

    let sub = retrieve_subgraph(&Query::text("mug", 2), &loaded, &p, 1).unwrap();
    assert_eq!(sub.anchors.len(), 2);
    assert!(!sub.visual.is_empty());
    let obs = p.embed("white ceramic mug").unwrap();
    let kept = denoise(&sub, &obs, DEFAULT_GAMMA3, &loaded, &p).unwrap();
    assert!(kept.visual.len() < sub.visual.len());
    assert!(kept.visual.iter().all(|t| t.source == Source::Scene));

    let params = GcnParameters::load(&fixture("gcn_params.json")).unwrap();
    let features = encode(&kept, &loaded, &params, &p).unwrap();
    assert_eq!(features.dim(), params.output_dim());
    assert!(features.rows.iter().flatten().all(|x| x.is_finite()));
}

#[test]
fn fixture_miss_is_reported_by_key() {
    let p = Provider::from_fixture_map(Default::default());
    let profile = SceneProfile::load(&fixture("profiles.json")).unwrap();
    let err = mine_concepts(&profile, scene_mmkg::schema::DEFAULT_TEMPLATE, &p).unwrap_err();
    assert_eq!(err.kind(), "fixture_miss");
    assert!(err.to_string().contains("kitchen-profile-"));
}
