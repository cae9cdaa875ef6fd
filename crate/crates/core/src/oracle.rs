//! Exact brute-force retrieval: ground truth, the planner's exact path, and
//! the reference that graph search is measured against.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FilteredQuery, LabeledDataset, VectorStore};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::{self, MetricKind, WeightModel};
use crate::PointId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: PointId,
    pub distance: f64,
}

impl Neighbor {
    pub fn new(id: PointId, distance: f64) -> Self {
        Neighbor { id, distance }
    }
}

/// Ascending distance, then ascending id.
#[inline]
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id))
}

/// A neighbor together with its query match score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredNeighbor {
    pub id: PointId,
    pub distance: f64,
    pub match_score: f64,
}

fn select_topk(mut all: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, neighbor_order);
        all.truncate(k);
    }
    all.sort_by(neighbor_order);
    all
}

pub fn exact_unfiltered_topk(ds: &LabeledDataset, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    check_k(ds, k)?;
    check_dim(ds, q)?;
    let all = (0..ds.len() as PointId)
        .map(|id| Neighbor::new(id, ds.raw_distance(id, q)))
        .collect();
    Ok(select_topk(all, k))
}

/// Unfiltered top-k, also reporting each result's match score against `required`.
pub fn exact_unfiltered_topk_scored(
    ds: &LabeledDataset,
    q: &[f32],
    required: &LabelSet,
    k: usize,
) -> Result<Vec<ScoredNeighbor>> {
    if required.is_empty() {
        return Err(Error::EmptyQueryLabels);
    }
    exact_unfiltered_topk(ds, q, k)?
        .into_iter()
        .map(|n| {
            Ok(ScoredNeighbor {
                id: n.id,
                distance: n.distance,
                match_score: metric::query_match_score(required, ds.labels(n.id))?,
            })
        })
        .collect()
}

/// Nearest points among those carrying every label in `required`. May return
/// fewer than `k`, including none.
pub fn exact_filtered_topk(
    ds: &LabeledDataset,
    q: &[f32],
    required: &LabelSet,
    k: usize,
) -> Result<Vec<Neighbor>> {
    if required.is_empty() {
        return Err(Error::EmptyQueryLabels);
    }
    check_dim(ds, q)?;
    let all = (0..ds.len() as PointId)
        .filter(|&id| required.is_subset_of(ds.labels(id)))
        .map(|id| Neighbor::new(id, ds.raw_distance(id, q)))
        .collect();
    Ok(select_topk(all, k))
}

/// Top-k by the weighted distance `d + w_m * (1 - match)` over the full dataset.
/// The reported distance is the weighted one.
pub fn exact_weighted_topk(
    ds: &LabeledDataset,
    q: &[f32],
    required: &LabelSet,
    model: &WeightModel,
    k: usize,
) -> Result<Vec<Neighbor>> {
    if required.is_empty() {
        return Err(Error::EmptyQueryLabels);
    }
    check_k(ds, k)?;
    check_dim(ds, q)?;
    let all = (0..ds.len() as PointId)
        .map(|id| {
            let raw = ds.raw_distance(id, q);
            let m = metric::label_match_score(required, ds.labels(id));
            Neighbor::new(id, metric::penalized(raw, m, model.w_m))
        })
        .collect();
    Ok(select_topk(all, k))
}

fn check_k(ds: &LabeledDataset, k: usize) -> Result<()> {
    if k == 0 || k > ds.len() {
        return Err(Error::Invalid(format!(
            "k = {k} must be in [1, N = {}]",
            ds.len()
        )));
    }
    Ok(())
}

fn check_dim(ds: &LabeledDataset, q: &[f32]) -> Result<()> {
    if q.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            left: q.len(),
            right: ds.dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthMode {
    FilteredExact,
    UnfilteredExact,
}

impl std::str::FromStr for GroundTruthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtered" | "filtered_exact" => Ok(GroundTruthMode::FilteredExact),
            "unfiltered" | "unfiltered_exact" => Ok(GroundTruthMode::UnfilteredExact),
            other => Err(Error::Invalid(format!(
                "unknown ground-truth mode `{other}`"
            ))),
        }
    }
}

/// Per-query exact neighbor lists. Row `i` belongs to the query with id `i`
/// when built from a full query file.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub mode: GroundTruthMode,
    pub k: usize,
    pub metric: MetricKind,
    pub rows: Vec<Vec<Neighbor>>,
}

/// Sidecar written next to a ground-truth file; the binary layout itself has
/// no room for the mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMeta {
    pub mode: GroundTruthMode,
    pub k: usize,
    pub metric: MetricKind,
    pub num_queries: usize,
}

/// Id written for padding slots when a filtered row has fewer than k entries.
pub const PAD_ID: u32 = u32::MAX;

pub fn build_ground_truth(
    ds: &LabeledDataset,
    queries: &[FilteredQuery],
    k: usize,
    mode: GroundTruthMode,
) -> Result<GroundTruth> {
    if k == 0 {
        return Err(Error::Invalid("ground truth needs k >= 1".into()));
    }
    let k_eff = k.min(ds.len());
    let rows = queries
        .par_iter()
        .map(|q| match mode {
            GroundTruthMode::FilteredExact => exact_filtered_topk(ds, &q.vector, &q.required, k),
            GroundTruthMode::UnfilteredExact => exact_unfiltered_topk(ds, &q.vector, k_eff),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth {
        mode,
        k,
        metric: ds.metric(),
        rows,
    })
}

impl GroundTruth {
    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// `u32 num_queries, u32 k`, then per query `k` u32 ids and `k` f32
    /// distances. Short rows are padded with [`PAD_ID`] and +inf.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.rows.len() * self.k * 8);
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for row in &self.rows {
            for i in 0..self.k {
                let id = row.get(i).map_or(PAD_ID, |n| n.id);
                out.extend_from_slice(&id.to_le_bytes());
            }
            for i in 0..self.k {
                let d = row.get(i).map_or(f32::INFINITY, |n| n.distance as f32);
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(
        bytes: &[u8],
        meta: &GroundTruthMeta,
    ) -> std::result::Result<Self, (u64, String)> {
        if bytes.len() < 8 {
            return Err((bytes.len() as u64, "header truncated".into()));
        }
        let nq = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if nq != meta.num_queries || k != meta.k {
            return Err((
                0,
                format!(
                    "header ({nq}, {k}) disagrees with sidecar ({}, {})",
                    meta.num_queries, meta.k
                ),
            ));
        }
        let expected = 8 + nq * k * 8;
        if bytes.len() != expected {
            return Err((
                bytes.len().min(expected) as u64,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let mut rows = Vec::with_capacity(nq);
        for qi in 0..nq {
            let base = 8 + qi * k * 8;
            let mut row = Vec::with_capacity(k);
            for i in 0..k {
                let id = u32_at(base + i * 4);
                let dist = f32::from_bits(u32_at(base + k * 4 + i * 4));
                if id == PAD_ID {
                    break;
                }
                row.push(Neighbor::new(id, dist as f64));
            }
            rows.push(row);
        }
        Ok(GroundTruth {
            mode: meta.mode,
            k,
            metric: meta.metric,
            rows,
        })
    }

    pub fn meta(&self) -> GroundTruthMeta {
        GroundTruthMeta {
            mode: self.mode,
            k: self.k,
            metric: self.metric,
            num_queries: self.rows.len(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))?;
        let meta = Self::meta_path(path);
        fs::write(&meta, serde_json::to_string_pretty(&self.meta())?)
            .map_err(|e| Error::io(&meta, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta_path = Self::meta_path(path);
        let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: GroundTruthMeta = serde_json::from_str(&meta_text)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &meta).map_err(|(offset, msg)| Error::Format {
            path: path.to_path_buf(),
            offset,
            msg,
        })
    }
}
