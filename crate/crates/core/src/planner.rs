//! Selectivity-based routing between an exact scan and graph search.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FilteredQuery, LabeledDataset, VectorStore};
use crate::error::{Error, Result};
use crate::index::{GraphIndex, SearchParams};
use crate::labels::LabelSet;
use crate::oracle::{neighbor_order, Neighbor};
use crate::PointId;

pub const DEFAULT_SELECTIVITY_THRESHOLD: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Queries estimated to match fewer points than this are scanned exactly.
    pub selectivity_threshold: u64,
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            selectivity_threshold: DEFAULT_SELECTIVITY_THRESHOLD,
            sample_fraction: 0.1,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "sample_fraction = {} must lie in (0, 1]",
                self.sample_fraction
            )));
        }
        Ok(())
    }
}

/// Sorted posting list of the ids carrying each label.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelPostings {
    lists: BTreeMap<u32, Vec<PointId>>,
}

impl LabelPostings {
    pub fn build<'a>(sets: impl IntoIterator<Item = (PointId, &'a LabelSet)>) -> Self {
        let mut lists: BTreeMap<u32, Vec<PointId>> = BTreeMap::new();
        for (id, set) in sets {
            for f in set.iter() {
                lists.entry(f).or_default().push(id);
            }
        }
        for l in lists.values_mut() {
            l.sort_unstable();
        }
        LabelPostings { lists }
    }

    pub fn of_dataset(ds: &LabeledDataset) -> Self {
        Self::build(
            ds.all_labels()
                .iter()
                .enumerate()
                .map(|(i, s)| (i as PointId, s)),
        )
    }

    pub fn get(&self, label: u32) -> &[PointId] {
        self.lists.get(&label).map_or(&[], Vec::as_slice)
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.lists.keys().copied()
    }

    /// Ids carrying every label of `required`, ascending. `required` must be
    /// nonempty.
    pub fn intersect(&self, required: &LabelSet) -> Vec<PointId> {
        let mut lists: Vec<&[PointId]> = required.iter().map(|f| self.get(f)).collect();
        lists.sort_by_key(|l| l.len());
        let Some((first, rest)) = lists.split_first() else {
            return Vec::new();
        };
        let mut acc: Vec<PointId> = first.to_vec();
        for other in rest {
            let mut j = 0;
            acc.retain(|&id| {
                while j < other.len() && other[j] < id {
                    j += 1;
                }
                j < other.len() && other[j] == id
            });
            if acc.is_empty() {
                break;
            }
        }
        acc
    }
}

/// Label postings over a seeded uniform sample of the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectivityIndex {
    pub postings: LabelPostings,
    pub sample_size: usize,
    pub n: usize,
}

impl SelectivityIndex {
    pub fn build(ds: &LabeledDataset, sample_fraction: f64, seed: u64) -> Result<Self> {
        if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "sample_fraction = {sample_fraction} must lie in (0, 1]"
            )));
        }
        let n = ds.len();
        let size = ((sample_fraction * n as f64).round() as usize).clamp(1, n);
        let mut ids: Vec<usize> = if size == n {
            (0..n).collect()
        } else {
            sample(&mut ChaCha8Rng::seed_from_u64(seed), n, size).into_vec()
        };
        ids.sort_unstable();
        let postings =
            LabelPostings::build(ids.iter().map(|&i| (i as PointId, ds.labels(i as PointId))));
        Ok(SelectivityIndex {
            postings,
            sample_size: size,
            n,
        })
    }

    pub fn scale(&self) -> f64 {
        self.n as f64 / self.sample_size as f64
    }
}

/// Estimated number of points satisfying `required`: sampled intersection
/// size times `N / sample_size`, rounded half up. An empty requirement is
/// satisfied by every point.
pub fn estimate_selectivity(sel: &SelectivityIndex, required: &LabelSet) -> u64 {
    if required.is_empty() {
        return sel.n as u64;
    }
    let hits = sel.postings.intersect(required).len() as u128;
    let (n, s) = (sel.n as u128, sel.sample_size as u128);
    ((2 * hits * n + s) / (2 * s)) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Brute,
    Graph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedResult {
    pub top: Vec<Neighbor>,
    pub route: Route,
    pub estimate: u64,
    pub comparisons: u64,
}

/// Routing state shared across queries.
#[derive(Clone, Debug)]
pub struct Planner {
    pub config: PlannerConfig,
    pub selectivity: SelectivityIndex,
    pub postings: LabelPostings,
}

impl Planner {
    pub fn new(ds: &LabeledDataset, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Planner {
            selectivity: SelectivityIndex::build(ds, config.sample_fraction, config.seed)?,
            postings: LabelPostings::of_dataset(ds),
            config,
        })
    }

    pub fn route(&self, required: &LabelSet) -> (Route, u64) {
        let est = estimate_selectivity(&self.selectivity, required);
        if !required.is_empty() && est < self.config.selectivity_threshold {
            (Route::Brute, est)
        } else {
            (Route::Graph, est)
        }
    }

    /// Scans the exact satisfying subset when the estimate is below the
    /// threshold, otherwise searches the graph. Brute-route results carry raw
    /// distances; graph-route results carry weighted distances.
    pub fn plan_and_search(
        &self,
        index: &GraphIndex,
        ds: &LabeledDataset,
        query: &FilteredQuery,
        params: &SearchParams,
    ) -> Result<PlannedResult> {
        let (route, estimate) = self.route(&query.required);
        match route {
            Route::Brute => {
                let subset = self.postings.intersect(&query.required);
                let mut scored: Vec<Neighbor> = subset
                    .iter()
                    .map(|&id| Neighbor::new(id, ds.raw_distance(id, &query.vector)))
                    .collect();
                scored.sort_by(neighbor_order);
                scored.truncate(params.k);
                Ok(PlannedResult {
                    top: scored,
                    route,
                    estimate,
                    comparisons: subset.len() as u64,
                })
            }
            Route::Graph => {
                let out = index.search(ds, &query.vector, &query.required, params)?;
                Ok(PlannedResult {
                    top: out.top,
                    route,
                    estimate,
                    comparisons: out.comparisons,
                })
            }
        }
    }
}
