//! Filter-aware Vamana graph: construction, search and persistence.
//!
//! Construction inserts points in a seeded random order. Each insertion runs
//! a weighted greedy search from the start nodes of the point's labels (the
//! medoid for unlabeled points), robust-prunes the visited set into the
//! point's out-list, then adds reverse edges and re-prunes any neighbor that
//! overflows the degree bound. All distances in both steps are the weighted
//! distance with the asymmetric label overlap of the point being connected.

mod io;
mod prune;
mod search;

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, VectorStore};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::{MetricKind, WeightModel};
use crate::PointId;

pub use io::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC, INDEX_VERSION};
pub use prune::robust_prune;
pub use search::{weighted_greedy_search, SearchOutcome};

pub(crate) use prune::point_distance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    /// Maximum out-degree `R`.
    pub max_degree: usize,
    /// Candidate list size used while inserting points.
    pub l_build: usize,
    /// Robust-prune slack factor, >= 1.
    pub alpha_prune: f64,
    pub model: WeightModel,
    /// Seeds the insertion order and the medoid sample.
    pub seed: u64,
    /// Above this many points the medoid is computed over a sample.
    pub medoid_exact_cap: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            max_degree: 32,
            l_build: 64,
            alpha_prune: 1.2,
            model: WeightModel::zero(),
            seed: 0,
            medoid_exact_cap: 10_000,
        }
    }
}

impl BuildParams {
    pub fn with_model(model: WeightModel) -> Self {
        BuildParams {
            model,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_degree == 0 {
            return Err(Error::Invalid("R must be >= 1".into()));
        }
        if self.l_build < self.max_degree {
            return Err(Error::Invalid(format!(
                "L_build = {} must be >= R = {}",
                self.l_build, self.max_degree
            )));
        }
        if !(self.alpha_prune >= 1.0 && self.alpha_prune.is_finite()) {
            return Err(Error::Invalid(format!(
                "alpha_prune = {} must be >= 1",
                self.alpha_prune
            )));
        }
        if self.medoid_exact_cap == 0 {
            return Err(Error::Invalid("medoid_exact_cap must be >= 1".into()));
        }
        self.model.validate()
    }
}

/// Build settings recorded in the index file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexHeader {
    pub max_degree: u32,
    pub l_build: u32,
    pub alpha_prune: f32,
    pub w_m: f32,
    pub metric: MetricKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMode {
    MedoidOnly,
    #[default]
    LabelStarts,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    pub l_search: usize,
    pub k: usize,
    pub model: WeightModel,
    pub entry_mode: EntryMode,
}

impl SearchParams {
    pub fn new(l_search: usize, k: usize, model: WeightModel) -> Self {
        SearchParams {
            l_search,
            k,
            model,
            entry_mode: EntryMode::LabelStarts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l_search < self.k {
            return Err(Error::Invalid(format!(
                "need L_search >= k >= 1, got L_search = {}, k = {}",
                self.l_search, self.k
            )));
        }
        self.model.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub reverse_reprunes: usize,
    /// Points not reachable from the medoid before the connectivity patch.
    pub unreachable_before_patch: usize,
    pub patch_edges: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphIndex {
    pub adjacency: Vec<Vec<PointId>>,
    pub medoid: PointId,
    pub start_nodes: BTreeMap<u32, PointId>,
    pub header: IndexHeader,
    pub fingerprint: [u8; 32],
}

/// Seeded permutation of `0..n` used as the insertion order.
pub fn build_permutation(n: usize, seed: u64) -> Vec<PointId> {
    let mut perm: Vec<PointId> = (0..n as PointId).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Point minimising the summed raw distance to all others, or to a seeded
/// sample of `exact_cap` points when the dataset is larger. Ties go to the
/// smaller id.
pub fn compute_medoid(ds: &LabeledDataset, exact_cap: usize, seed: u64) -> PointId {
    let n = ds.len();
    let pool: Vec<PointId> = if n <= exact_cap {
        (0..n as PointId).collect()
    } else {
        let mut ids: Vec<PointId> = (0..n as PointId).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x6d65_646f_6964));
        ids.truncate(exact_cap);
        ids.sort_unstable();
        ids
    };
    let sums: Vec<f64> = pool
        .par_iter()
        .map(|&c| {
            let v = ds.vector(c);
            pool.iter().map(|&o| ds.raw_distance(o, v)).sum()
        })
        .collect();
    let best = (0..pool.len())
        .min_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(pool[a].cmp(&pool[b])))
        .expect("dataset is nonempty");
    pool[best]
}

fn distance_to_centroid(v: &[f32], centroid: &[f64], metric: MetricKind) -> f64 {
    let cnorm: f64 = centroid.iter().map(|x| x * x).sum();
    match metric {
        MetricKind::Cosine if cnorm > 0.0 => {
            let (mut dot, mut vn) = (0.0, 0.0);
            for (a, c) in v.iter().zip(centroid) {
                dot += *a as f64 * c;
                vn += (*a as f64) * (*a as f64);
            }
            (1.0 - dot / (vn.sqrt() * cnorm.sqrt())).clamp(0.0, 2.0)
        }
        _ => v
            .iter()
            .zip(centroid)
            .map(|(a, c)| (*a as f64 - c).powi(2))
            .sum::<f64>()
            .sqrt(),
    }
}

/// For each label present, the carrier closest to the centroid of all
/// carriers (ties to the smaller id).
pub fn compute_start_nodes(ds: &LabeledDataset) -> BTreeMap<u32, PointId> {
    let d = ds.dim();
    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for id in 0..ds.len() as PointId {
        for f in ds.labels(id).iter() {
            let e = sums.entry(f).or_insert_with(|| (vec![0.0; d], 0));
            for (acc, x) in e.0.iter_mut().zip(ds.vector(id)) {
                *acc += *x as f64;
            }
            e.1 += 1;
        }
    }
    let centroids: BTreeMap<u32, Vec<f64>> = sums
        .into_iter()
        .map(|(f, (s, c))| (f, s.into_iter().map(|x| x / c as f64).collect()))
        .collect();
    let mut best: BTreeMap<u32, (f64, PointId)> = BTreeMap::new();
    for id in 0..ds.len() as PointId {
        for f in ds.labels(id).iter() {
            let dist = distance_to_centroid(ds.vector(id), &centroids[&f], ds.metric());
            let e = best.entry(f).or_insert((f64::INFINITY, id));
            if dist < e.0 {
                *e = (dist, id);
            }
        }
    }
    best.into_iter().map(|(f, (_, id))| (f, id)).collect()
}

fn insert_sorted(list: &mut Vec<PointId>, id: PointId) -> bool {
    match list.binary_search(&id) {
        Ok(_) => false,
        Err(at) => {
            list.insert(at, id);
            true
        }
    }
}

fn reachable_from(adjacency: &[Vec<PointId>], root: PointId) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    extend_reach(adjacency, root, &mut seen);
    seen
}

fn extend_reach(adjacency: &[Vec<PointId>], root: PointId, seen: &mut [bool]) {
    if seen[root as usize] {
        return;
    }
    seen[root as usize] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v as usize] {
            if !seen[u as usize] {
                seen[u as usize] = true;
                queue.push_back(u);
            }
        }
    }
}

impl GraphIndex {
    pub fn build(ds: &LabeledDataset, params: &BuildParams) -> Result<(GraphIndex, BuildStats)> {
        params.validate()?;
        let n = ds.len();
        let (r, w) = (params.max_degree, params.model.w_m);
        let medoid = compute_medoid(ds, params.medoid_exact_cap, params.seed);
        let start_nodes = compute_start_nodes(ds);
        let mut adjacency: Vec<Vec<PointId>> = vec![Vec::new(); n];
        let mut stats = BuildStats::default();

        for p in build_permutation(n, params.seed) {
            let labels = ds.labels(p);
            let mut entries: Vec<PointId> = labels.iter().map(|f| start_nodes[&f]).collect();
            if entries.is_empty() {
                entries.push(medoid);
            }
            entries.sort_unstable();
            entries.dedup();
            let found = weighted_greedy_search(
                &adjacency,
                ds,
                ds.vector(p),
                labels,
                &entries,
                0,
                params.l_build,
                w,
            )?;
            let mut candidates = found.visited;
            candidates.extend_from_slice(&adjacency[p as usize]);
            let out = robust_prune(ds, p, &candidates, params.alpha_prune, r, w);
            adjacency[p as usize] = out.clone();
            for j in out {
                let list = &mut adjacency[j as usize];
                if insert_sorted(list, p) && list.len() > r {
                    let current = std::mem::take(list);
                    adjacency[j as usize] = robust_prune(ds, j, &current, params.alpha_prune, r, w);
                    stats.reverse_reprunes += 1;
                }
                debug_assert!(adjacency[j as usize].len() <= r);
            }
            debug_assert!(adjacency[p as usize].len() <= r);
        }

        let (unreachable, patched) = connectivity_patch(ds, &mut adjacency, medoid, r, w)?;
        stats.unreachable_before_patch = unreachable;
        stats.patch_edges = patched;
        if patched > 0 {
            log::info!(
                "connectivity patch added {patched} edges for {unreachable} unreachable points"
            );
        }
        stats.max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        stats.mean_degree = adjacency.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
        if stats.max_degree > r {
            return Err(Error::Invariant(format!(
                "out-degree {} exceeds R = {r}",
                stats.max_degree
            )));
        }

        let index = GraphIndex {
            adjacency,
            medoid,
            start_nodes,
            header: IndexHeader {
                max_degree: r as u32,
                l_build: params.l_build as u32,
                alpha_prune: params.alpha_prune as f32,
                w_m: params.model.w_m as f32,
                metric: ds.metric(),
            },
            fingerprint: ds.fingerprint(),
        };
        Ok((index, stats))
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Entry points for a query: the medoid, plus the start node of every
    /// required label in `LabelStarts` mode.
    pub fn entries(&self, labels: &LabelSet, mode: EntryMode) -> Vec<PointId> {
        let mut e = vec![self.medoid];
        if mode == EntryMode::LabelStarts {
            e.extend(
                labels
                    .iter()
                    .filter_map(|f| self.start_nodes.get(&f).copied()),
            );
        }
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn search<S: VectorStore + ?Sized>(
        &self,
        store: &S,
        query: &[f32],
        labels: &LabelSet,
        params: &SearchParams,
    ) -> Result<SearchOutcome> {
        params.validate()?;
        if store.len() != self.len() {
            return Err(Error::Invalid(format!(
                "index has {} points, store has {}",
                self.len(),
                store.len()
            )));
        }
        let entries = self.entries(labels, params.entry_mode);
        weighted_greedy_search(
            &self.adjacency,
            store,
            query,
            labels,
            &entries,
            params.k,
            params.l_search,
            params.model.w_m,
        )
    }

    /// Checks degree bound, id range, self-loops and duplicates.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.len();
        let r = self.header.max_degree as usize;
        for (p, list) in self.adjacency.iter().enumerate() {
            if list.len() > r {
                return Err(Error::Invariant(format!(
                    "point {p} has degree {} > R = {r}",
                    list.len()
                )));
            }
            if list.iter().any(|&u| u as usize >= n) {
                return Err(Error::Invariant(format!(
                    "point {p} has an out-of-range neighbor"
                )));
            }
            if list.iter().any(|&u| u as usize == p) {
                return Err(Error::Invariant(format!("point {p} has a self-loop")));
            }
            if list.iter().collect::<HashSet<_>>().len() != list.len() {
                return Err(Error::Invariant(format!(
                    "point {p} has duplicate neighbors"
                )));
            }
        }
        Ok(())
    }

    pub fn unreachable_count(&self) -> usize {
        reachable_from(&self.adjacency, self.medoid)
            .iter()
            .filter(|r| !**r)
            .count()
    }
}

/// Makes every point reachable from the medoid. Each unreachable point `u`
/// (smallest id first) gets an edge from the medoid; when the medoid is full,
/// its weighted-farthest neighbor that is not itself a patch edge is evicted.
/// Once the medoid holds only patch edges, earlier patch targets host the new
/// edges in turn. Returns (unreachable before patching, edges added).
fn connectivity_patch(
    ds: &LabeledDataset,
    adjacency: &mut [Vec<PointId>],
    medoid: PointId,
    r: usize,
    w: f64,
) -> Result<(usize, usize)> {
    let mut reach = reachable_from(adjacency, medoid);
    let unreachable = reach.iter().filter(|x| !**x).count();
    let mut protected: HashSet<(PointId, PointId)> = HashSet::new();
    let mut hosts = vec![medoid];
    let mut added = 0;
    let mut cursor = 0usize;
    loop {
        while cursor < reach.len() && reach[cursor] {
            cursor += 1;
        }
        if cursor == reach.len() {
            break;
        }
        let u = cursor as PointId;
        let host = hosts
            .iter()
            .copied()
            .find(|&h| {
                adjacency[h as usize].len() < r
                    || adjacency[h as usize]
                        .iter()
                        .any(|&v| !protected.contains(&(h, v)))
            })
            .ok_or_else(|| {
                Error::Invariant("connectivity patch ran out of host capacity".into())
            })?;
        let mut evicted = false;
        if adjacency[host as usize].len() >= r {
            let victim = adjacency[host as usize]
                .iter()
                .copied()
                .filter(|&v| !protected.contains(&(host, v)))
                .max_by(|&a, &b| {
                    point_distance(ds, host, a, w)
                        .total_cmp(&point_distance(ds, host, b, w))
                        .then(a.cmp(&b))
                })
                .expect("host has an unprotected edge");
            adjacency[host as usize].retain(|&v| v != victim);
            evicted = true;
        }
        insert_sorted(&mut adjacency[host as usize], u);
        protected.insert((host, u));
        hosts.push(u);
        added += 1;
        if evicted {
            reach = reachable_from(adjacency, medoid);
            cursor = 0;
        } else {
            extend_reach(adjacency, u, &mut reach);
        }
        if added > adjacency.len() * r {
            return Err(Error::Invariant(
                "connectivity patch did not converge".into(),
            ));
        }
    }
    Ok((unreachable, added))
}
