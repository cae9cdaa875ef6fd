mod common;

use std::collections::BTreeMap;

use fann::dataset::{
    generate_synthetic, FilteredQuery, LabeledDataset, SyntheticSpec, VectorMatrix, VectorStore,
};
use fann::index::{
    compute_medoid, compute_start_nodes, weighted_greedy_search, BuildParams, EntryMode,
    GraphIndex, SearchParams,
};
use fann::labels::LabelSet;
use fann::metric::{raw_distance, MetricKind};
use fann::oracle::{build_ground_truth, GroundTruthMode};
use fann::{PointId, WeightModel};

use common::{mean, reference_search, simple_recall, CountingStore};

fn small_set(seed: u64) -> fann::dataset::SyntheticData {
    let mut spec = SyntheticSpec::new(2000, 8, 12, seed);
    spec.num_queries = 250;
    generate_synthetic(&spec).unwrap()
}

#[test]
fn comparison_count_equals_raw_distance_evaluations() {
    let data = small_set(1);
    let ds = &data.dataset;
    let (index, _) = GraphIndex::build(
        ds,
        &BuildParams::with_model(WeightModel::fixed(0.5).unwrap()),
    )
    .unwrap();
    let store = CountingStore::new(ds);
    for q in data.queries.iter().take(40) {
        for l in [10, 40] {
            let p = SearchParams::new(l, 10, WeightModel::fixed(0.5).unwrap());
            let out = index.search(&store, &q.vector, &q.required, &p).unwrap();
            assert_eq!(out.comparisons, store.take());
        }
    }
}

#[test]
fn zero_weight_search_matches_unweighted_reference_traversal() {
    let data = small_set(2);
    let ds = &data.dataset;
    let (index, _) = GraphIndex::build(ds, &BuildParams::default()).unwrap();
    for q in data.queries.iter().take(50) {
        for l in [10, 30, 80] {
            let ours = weighted_greedy_search(
                &index.adjacency,
                ds,
                &q.vector,
                &q.required,
                &[index.medoid],
                10,
                l,
                0.0,
            )
            .unwrap();
            let (top, expanded) =
                reference_search(&index.adjacency, ds, index.medoid, &q.vector, 10, l);
            assert_eq!(ours.top.iter().map(|n| n.id).collect::<Vec<_>>(), top);
            assert_eq!(ours.visited, expanded);
        }
    }
}

#[test]
fn build_is_bitwise_deterministic_and_seed_sensitive() {
    let data = small_set(3);
    let params = BuildParams {
        model: WeightModel::fixed(0.7).unwrap(),
        seed: 11,
        ..Default::default()
    };
    let (a, _) = GraphIndex::build(&data.dataset, &params).unwrap();
    let (b, _) = GraphIndex::build(&data.dataset, &params).unwrap();
    assert_eq!(fann::index::encode_index(&a), fann::index::encode_index(&b));
    let (c, _) = GraphIndex::build(&data.dataset, &BuildParams { seed: 12, ..params }).unwrap();
    assert_ne!(a.adjacency, c.adjacency);
}

#[test]
fn recall_is_monotone_in_search_list_size() {
    let data = small_set(4);
    let ds = &data.dataset;
    let model = WeightModel::fixed(1.0).unwrap();
    let (index, _) = GraphIndex::build(ds, &BuildParams::with_model(model)).unwrap();
    let queries: Vec<FilteredQuery> = data.queries.iter().take(200).cloned().collect();
    let gt: Vec<Vec<PointId>> = queries
        .iter()
        .map(|q| {
            fann::oracle::exact_weighted_topk(ds, &q.vector, &q.required, &model, 10)
                .unwrap()
                .iter()
                .map(|n| n.id)
                .collect()
        })
        .collect();
    let mut prev = 0.0;
    for l in [10, 20, 50, 100, 200] {
        let p = SearchParams::new(l, 10, model);
        let r = mean(queries.iter().zip(&gt).map(|(q, t)| {
            let got: Vec<PointId> = index
                .search(ds, &q.vector, &q.required, &p)
                .unwrap()
                .top
                .iter()
                .map(|n| n.id)
                .collect();
            simple_recall(&got, t, 10).unwrap()
        }));
        assert!(
            r + 0.005 >= prev,
            "recall dropped from {prev} to {r} at L = {l}"
        );
        prev = r;
    }
    assert!(prev > 0.95);
}

#[test]
fn unfiltered_search_improves_with_list_size_on_zero_index() {
    let data = small_set(5);
    let ds = &data.dataset;
    let (index, _) = GraphIndex::build(ds, &BuildParams::default()).unwrap();
    let queries: Vec<FilteredQuery> = data
        .queries
        .iter()
        .map(|q| FilteredQuery::unfiltered(q.id, q.vector.clone()))
        .collect();
    let gt = build_ground_truth(ds, &queries, 10, GroundTruthMode::UnfilteredExact).unwrap();
    let at = |l: usize| {
        let p = SearchParams {
            entry_mode: EntryMode::MedoidOnly,
            ..SearchParams::new(l, 10, WeightModel::zero())
        };
        mean(queries.iter().zip(&gt.rows).map(|(q, row)| {
            let got: Vec<PointId> = index
                .search(ds, &q.vector, &LabelSet::empty(), &p)
                .unwrap()
                .top
                .iter()
                .map(|n| n.id)
                .collect();
            simple_recall(&got, &row.iter().map(|n| n.id).collect::<Vec<_>>(), 10).unwrap()
        }))
    };
    assert!(at(100) >= at(10));
    assert!(at(100) > 0.98);
}

#[test]
fn start_nodes_match_centroid_scan() {
    let mut spec = SyntheticSpec::new(1500, 6, 16, 9);
    spec.cluster_count = 4;
    spec.label_cluster_correlation = 1.0;
    spec.num_queries = 0;
    let data = generate_synthetic(&spec).unwrap();
    let ds = &data.dataset;
    let st = compute_start_nodes(ds);
    let mut carriers: BTreeMap<u32, Vec<PointId>> = BTreeMap::new();
    for id in 0..ds.len() as PointId {
        for f in ds.labels(id).iter() {
            carriers.entry(f).or_default().push(id);
        }
    }
    assert_eq!(
        st.keys().copied().collect::<Vec<_>>(),
        carriers.keys().copied().collect::<Vec<_>>()
    );
    for (f, ids) in &carriers {
        let mut c = vec![0.0f64; ds.dim()];
        for &id in ids {
            for (a, x) in c.iter_mut().zip(ds.vector(id)) {
                *a += *x as f64 / ids.len() as f64;
            }
        }
        let c32: Vec<f32> = c.iter().map(|&x| x as f32).collect();
        let best = ids
            .iter()
            .copied()
            .min_by(|&a, &b| {
                raw_distance(ds.vector(a), &c32, MetricKind::Euclidean)
                    .total_cmp(&raw_distance(ds.vector(b), &c32, MetricKind::Euclidean))
                    .then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(st[f], best, "label {f}");
        // with full correlation every carrier of f sits in cluster f % 4
        assert_eq!(data.point_clusters[best as usize], (*f as usize) % 4);
    }
}

#[test]
fn start_node_tie_goes_to_smaller_id() {
    let v = VectorMatrix::new(3, 2, vec![1.0, 1.0, 1.0, 1.0, 9.0, 9.0]).unwrap();
    let labels = vec![LabelSet::new([0]), LabelSet::new([0]), LabelSet::new([1])];
    let ds = LabeledDataset::new(v, labels, MetricKind::Euclidean, None).unwrap();
    let st = compute_start_nodes(&ds);
    assert_eq!(st[&1], 2);
    // 0, 1 identical and the centroid of label 0 coincides with them
    assert_eq!(st[&0], 0);
}

#[test]
fn sampled_medoid_is_deterministic_and_central() {
    let data = small_set(6);
    let ds = &data.dataset;
    let a = compute_medoid(ds, 300, 5);
    assert_eq!(a, compute_medoid(ds, 300, 5));
    let exact = compute_medoid(ds, 10_000, 0);
    let total = |c: PointId| -> f64 {
        (0..ds.len() as PointId)
            .map(|o| raw_distance(ds.vector(o), ds.vector(c), ds.metric()))
            .sum()
    };
    assert!(total(exact) <= total(a));
    assert!(total(a) <= 1.1 * total(exact));
}

#[test]
fn heavy_weight_build_stays_connected_and_bounded() {
    let data = small_set(7);
    let params = BuildParams {
        max_degree: 8,
        l_build: 16,
        model: WeightModel::fixed(1e4).unwrap(),
        ..Default::default()
    };
    let (index, stats) = GraphIndex::build(&data.dataset, &params).unwrap();
    index.check_structure().unwrap();
    assert_eq!(index.unreachable_count(), 0);
    assert!(stats.max_degree <= 8);
}

#[test]
fn cosine_build_and_search() {
    let mut spec = SyntheticSpec::new(800, 8, 6, 8);
    spec.metric = MetricKind::Cosine;
    spec.num_queries = 40;
    let data = generate_synthetic(&spec).unwrap();
    let ds = &data.dataset;
    let model = WeightModel::fixed(0.2).unwrap();
    let (index, _) = GraphIndex::build(ds, &BuildParams::with_model(model)).unwrap();
    let p = SearchParams::new(100, 10, model);
    let r = mean(data.queries.iter().map(|q| {
        let truth: Vec<PointId> =
            fann::oracle::exact_weighted_topk(ds, &q.vector, &q.required, &model, 10)
                .unwrap()
                .iter()
                .map(|n| n.id)
                .collect();
        let got: Vec<PointId> = index
            .search(ds, &q.vector, &q.required, &p)
            .unwrap()
            .top
            .iter()
            .map(|n| n.id)
            .collect();
        simple_recall(&got, &truth, 10).unwrap()
    }));
    assert!(r > 0.95, "{r}");
}
