#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use fann::dataset::{
    generate_synthetic, LabeledDataset, SyntheticData, SyntheticSpec, VectorStore,
};
use fann::labels::LabelSet;
use fann::metric::{raw_distance, MetricKind};
use fann::PointId;

pub fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(format!("{name}.json"))
}

pub fn load_spec(name: &str) -> SyntheticSpec {
    let text = std::fs::read_to_string(spec_path(name)).expect("spec file");
    serde_json::from_str(&text).expect("spec json")
}

pub fn generate(name: &str, seed: Option<u64>) -> SyntheticData {
    let mut spec = load_spec(name);
    if let Some(s) = seed {
        spec.seed = s;
    }
    generate_synthetic(&spec).expect("synthetic data")
}

/// Wraps a dataset and counts raw distance evaluations made through it.
pub struct CountingStore<'a> {
    pub inner: &'a LabeledDataset,
    pub calls: AtomicU64,
}

impl<'a> CountingStore<'a> {
    pub fn new(inner: &'a LabeledDataset) -> Self {
        CountingStore {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn take(&self) -> u64 {
        self.calls.swap(0, Ordering::SeqCst)
    }
}

impl VectorStore for CountingStore<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn vector(&self, id: PointId) -> &[f32] {
        self.inner.vector(id)
    }
    fn labels(&self, id: PointId) -> &LabelSet {
        self.inner.labels(id)
    }
    fn metric(&self) -> MetricKind {
        self.inner.metric()
    }
    fn raw_distance(&self, id: PointId, target: &[f32]) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        raw_distance(self.inner.vector(id), target, self.inner.metric())
    }
}

/// Key ordering candidates by (distance, id).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, PointId);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Plain unweighted Vamana written independently of the library: single
/// medoid entry, ordered-set beam, classic robust prune.
pub struct ReferenceVamana {
    pub adjacency: Vec<Vec<PointId>>,
    pub medoid: PointId,
}

fn dist(ds: &LabeledDataset, a: PointId, b: &[f32]) -> f64 {
    raw_distance(ds.vector(a), b, ds.metric())
}

/// Returns (best `k` ids, expanded ids).
pub fn reference_search(
    graph: &[Vec<PointId>],
    ds: &LabeledDataset,
    start: PointId,
    q: &[f32],
    k: usize,
    l: usize,
) -> (Vec<PointId>, Vec<PointId>) {
    let mut seen = vec![false; ds.len()];
    let mut pool: BTreeSet<Key> = BTreeSet::new();
    let mut done: BTreeSet<PointId> = BTreeSet::new();
    let mut expanded = Vec::new();
    seen[start as usize] = true;
    pool.insert(Key(dist(ds, start, q), start));
    loop {
        let next = pool.iter().find(|c| !done.contains(&c.1)).copied();
        let Some(Key(_, v)) = next else { break };
        done.insert(v);
        expanded.push(v);
        for &u in &graph[v as usize] {
            if seen[u as usize] {
                continue;
            }
            seen[u as usize] = true;
            pool.insert(Key(dist(ds, u, q), u));
            while pool.len() > l {
                let last = *pool.iter().next_back().unwrap();
                pool.remove(&last);
            }
        }
    }
    (pool.iter().take(k).map(|c| c.1).collect(), expanded)
}

pub fn reference_prune(
    ds: &LabeledDataset,
    p: PointId,
    cands: &[PointId],
    alpha: f64,
    r: usize,
) -> Vec<PointId> {
    let pv = ds.vector(p);
    let mut set: BTreeSet<Key> = cands
        .iter()
        .filter(|&&c| c != p)
        .map(|&c| Key(dist(ds, c, pv), c))
        .collect();
    let mut out = Vec::new();
    while let Some(&best) = set.iter().next() {
        set.remove(&best);
        out.push(best.1);
        if out.len() == r {
            break;
        }
        let bv = ds.vector(best.1);
        set.retain(|c| alpha * dist(ds, c.1, bv) > c.0);
    }
    out.sort_unstable();
    out
}

impl ReferenceVamana {
    pub fn build(
        ds: &LabeledDataset,
        order: &[PointId],
        medoid: PointId,
        r: usize,
        l: usize,
        alpha: f64,
    ) -> Self {
        let mut g: Vec<Vec<PointId>> = vec![Vec::new(); ds.len()];
        for &p in order {
            let (_, visited) = reference_search(&g, ds, medoid, ds.vector(p), 0, l);
            let mut cands = visited;
            cands.extend(g[p as usize].iter().copied());
            cands.sort_unstable();
            cands.dedup();
            let out = reference_prune(ds, p, &cands, alpha, r);
            g[p as usize] = out.clone();
            for j in out {
                if !g[j as usize].contains(&p) {
                    g[j as usize].push(p);
                    if g[j as usize].len() > r {
                        let c = g[j as usize].clone();
                        g[j as usize] = reference_prune(ds, j, &c, alpha, r);
                    } else {
                        g[j as usize].sort_unstable();
                    }
                }
            }
        }
        ReferenceVamana {
            adjacency: g,
            medoid,
        }
    }

    pub fn search(&self, ds: &LabeledDataset, q: &[f32], k: usize, l: usize) -> Vec<PointId> {
        reference_search(&self.adjacency, ds, self.medoid, q, k, l).0
    }
}

/// Recall@k computed directly from id lists.
pub fn simple_recall(got: &[PointId], truth: &[PointId], k: usize) -> Option<f64> {
    let denom = k.min(truth.len());
    if denom == 0 {
        return None;
    }
    let want: BTreeSet<PointId> = truth[..denom].iter().copied().collect();
    let hit: BTreeSet<PointId> = got
        .iter()
        .take(k)
        .copied()
        .filter(|id| want.contains(id))
        .collect();
    Some(hit.len() as f64 / denom as f64)
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}
