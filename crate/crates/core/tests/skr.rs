use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use proptest::prelude::*;
use scene_mmkg::kg::{Entity, ImageAsset, ImageKind, SceneMmkg, Source, Tail, Triple};
use scene_mmkg::providers::{EmbeddingVector, StaticEmbedder};
use scene_mmkg::schema::SceneSchema;
use scene_mmkg::skr::{
    denoise, encode, expand, normalized_adjacency, propagate, Activation, EntityIndex,
    GcnParameters,
};
use scene_mmkg::text::EntityId;

struct Fixture {
    graph: SceneMmkg,
    ids: Vec<EntityId>,
}

/// `n` entities `e0..`, entity edges from `edges`, one literal per entity and
/// one captioned image per entry of `images` (entity index, caption index).
fn graph(n: usize, edges: &[(usize, usize)], images: &[(usize, usize)]) -> Fixture {
    let labels: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let schema = SceneSchema::from_labels("s", &labels);
    let mut g = SceneMmkg::new(schema.clone());
    let ids: Vec<EntityId> = labels
        .iter()
        .map(|l| {
            let c = schema.resolve(l).unwrap();
            g.add_entity(Entity::for_concept(l, c.id.clone())).unwrap()
        })
        .collect();
    for &(a, b) in edges {
        g.add_triple(Triple::new(
            ids[a].clone(),
            "near",
            Tail::Entity(ids[b].clone()),
            Source::Scene,
        ))
        .unwrap();
    }
    for (i, id) in ids.iter().enumerate() {
        g.add_triple(Triple::new(
            id.clone(),
            "color",
            Tail::Literal(format!("c{i}")),
            Source::General,
        ))
        .unwrap();
    }
    for (k, &(e, cap)) in images.iter().enumerate() {
        let a = g
            .add_asset(ImageAsset::new(
                format!("img/{k}.png"),
                ImageKind::Synthetic,
                Some(format!("cap{cap}")),
            ))
            .unwrap();
        g.add_triple(Triple::new(
            ids[e].clone(),
            "image",
            Tail::Image(a),
            Source::Scene,
        ))
        .unwrap();
    }
    g.freeze();
    Fixture { graph: g, ids }
}

/// Hop distance from the anchors over entity-entity triples, computed by
/// relaxing every edge until nothing changes.
fn distances(n: usize, edges: &[(usize, usize)], anchors: &[usize]) -> Vec<usize> {
    let mut d = vec![usize::MAX; n];
    for &a in anchors {
        d[a] = 0;
    }
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if d[x] != usize::MAX && d[x] + 1 < d[y] {
                    d[y] = d[x] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return d;
        }
    }
}

type Edges = Vec<(usize, usize)>;

fn arb_graph() -> impl Strategy<Value = (usize, Edges, Edges)> {
    (1..12usize).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..2 * n),
            prop::collection::vec((0..n, 0..4usize), 0..6),
        )
    })
}

fn caption_embedder() -> StaticEmbedder {
    let mut e = StaticEmbedder::new(3);
    for (i, v) in [
        [1.0, 0.0, 0.0],
        [0.6, 0.8, 0.0],
        [0.0, 1.0, 0.0],
        [-1.0, 0.2, 0.3],
    ]
    .iter()
    .enumerate()
    {
        e.insert(format!("cap{i}"), v.to_vec()).unwrap();
    }
    e
}

proptest! {
    #[test]
    fn expansion_matches_hop_distances(
        (n, edges, images) in arb_graph(),
        anchor_mask in prop::collection::vec(any::<bool>(), 12),
        hops in 0..4usize,
    ) {
        let f = graph(n, &edges, &images);
        let mut anchors: Vec<usize> = (0..n).filter(|i| anchor_mask[*i]).collect();
        if anchors.is_empty() {
            anchors.push(0);
        }
        let anchor_ids: Vec<EntityId> = anchors.iter().map(|&i| f.ids[i].clone()).collect();
        let sub = expand(&anchor_ids, &f.graph, hops).unwrap();

        let d = distances(n, &edges, &anchors);
        let index: BTreeMap<&EntityId, usize> = f.ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let near = |id: &EntityId| hops > 0 && d[index[id]] < hops;
        let want: BTreeSet<_> = f
            .graph
            .triples()
            .filter(|t| near(&t.head) || t.tail.entity().is_some_and(near))
            .map(|t| t.key())
            .collect();
        let got: BTreeSet<_> = sub.textual.iter().chain(&sub.visual).map(|t| t.key()).collect();
        prop_assert_eq!(got, want);
        prop_assert!(sub.visual.iter().all(|t| t.tail.is_visual()));
        prop_assert!(sub.textual.iter().all(|t| !t.tail.is_visual()));
    }

    #[test]
    fn denoising_is_monotone_in_the_threshold(
        (n, edges, images) in arb_graph(),
        obs in prop::collection::vec(-1.0..1.0f64, 3),
        mut gammas in prop::collection::vec(-1.2..1.2f64, 2..6),
    ) {
        let f = graph(n, &edges, &images);
        let sub = expand(&f.ids, &f.graph, 1).unwrap();
        let emb = caption_embedder();
        let obs = EmbeddingVector::raw(obs);
        gammas.sort_by(f64::total_cmp);
        let mut prev: Option<BTreeSet<Tail>> = None;
        for g in gammas {
            let out = denoise(&sub, &obs, g, &f.graph, &emb).unwrap();
            prop_assert_eq!(&out.textual, &sub.textual);
            prop_assert!(out.visual_scores.values().all(|s| *s >= g));
            let kept: BTreeSet<Tail> = out.visual.iter().map(|t| t.tail.clone()).collect();
            if let Some(p) = &prev {
                prop_assert!(kept.is_subset(p));
            }
            prev = Some(kept);
        }
    }

    #[test]
    fn top_k_is_sorted_with_id_tie_break(
        vectors in prop::collection::vec(prop::collection::vec(-1i8..=1, 2), 1..30),
        q in prop::collection::vec(-1i8..=1, 2),
        k in 1..40usize,
    ) {
        prop_assume!(q.iter().any(|x| *x != 0));
        let n = vectors.len();
        let f = graph(n, &[], &[]);
        let mut emb = StaticEmbedder::new(2);
        for (i, v) in vectors.iter().enumerate() {
            emb.insert(format!("e{i}"), v.iter().map(|x| f64::from(*x)).collect()).unwrap();
        }
        let index = EntityIndex::build(&f.graph, &emb).unwrap();
        let hits = index.top_k(&EmbeddingVector::normalized(q.iter().map(|x| f64::from(*x)).collect()), k).unwrap();
        prop_assert_eq!(hits.len(), k.min(n));
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id));
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_unit_spectral_bound(
        (n, edges, _) in arb_graph(),
    ) {
        let a = normalized_adjacency(n, &edges);
        prop_assert!((&a - a.transpose()).abs().max() < 1e-12);
        let eig = a.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|l| *l <= 1.0 + 1e-9 && *l > -1.0 - 1e-9));
        // Self-loops keep D^-1/2 (A+I) D^-1/2 with eigenvalue 1 on sqrt(deg).
        let deg: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| a[(i, j)] != 0.0).count() as f64).collect();
        let v = DMatrix::from_fn(n, 1, |i, _| deg[i].sqrt());
        prop_assert!(((&a * &v) - &v).abs().max() < 1e-9);
    }
}

#[test]
fn encode_covers_every_node_of_the_subgraph() {
    let f = graph(3, &[(0, 1), (1, 2)], &[(0, 0)]);
    let sub = expand(&f.ids[..1], &f.graph, 1).unwrap();
    let mut emb = StaticEmbedder::new(3).with_fallback(scene_mmkg::providers::Provider::offline(3));
    emb.insert("e0", vec![1.0, 0.0, 0.0]).unwrap();
    let feats = encode(
        &sub,
        &f.graph,
        &GcnParameters::identity(2, 3, Activation::Relu),
        &emb,
    )
    .unwrap();
    // e0, its neighbor e1, one literal and one image.
    assert_eq!(feats.node_ids.len(), 4);
    assert!(feats.node_labels.contains(&"cap0".to_string()));
    assert_eq!(feats.rows.len(), 4);
    let pooled = feats.mean_pool(&[f.ids[0].as_str()]).unwrap();
    assert_eq!(pooled.len(), 3);
}

#[test]
fn propagation_rejects_shape_mismatches() {
    let p = GcnParameters::identity(1, 2, Activation::Identity);
    let h = DMatrix::zeros(3, 2);
    assert_eq!(
        propagate(2, &[], h.clone(), &p).unwrap_err().kind(),
        "contract"
    );
    assert_eq!(
        propagate(3, &[(0, 5)], h, &p).unwrap_err().kind(),
        "contract"
    );
    assert_eq!(
        propagate(1, &[], DMatrix::zeros(1, 4), &p)
            .unwrap_err()
            .kind(),
        "contract"
    );
}
