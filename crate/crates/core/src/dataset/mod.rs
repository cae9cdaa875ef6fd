//! Labeled datasets, queries, and their on-disk formats.

mod io;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::{self, MetricKind};
use crate::PointId;

pub use io::{
    decode_fbin, encode_fbin, load_labels, load_vectors, parse_labels, save_labels, save_vectors,
    DatasetManifest,
};
pub use synthetic::{
    generate_synthetic, LabelCountRange, QueryLabelSource, SyntheticData, SyntheticSpec,
};

/// Row-major `rows x dim` matrix of f32 as stored in fbin files.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl VectorMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::Invalid(format!(
                "matrix payload has {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        Ok(VectorMatrix { rows, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Read-only access to stored points. The graph search and prune are written
/// against this trait so tests can wrap a dataset and observe every raw
/// distance evaluation.
pub trait VectorStore: Sync {
    fn len(&self) -> usize;
    fn vector(&self, id: PointId) -> &[f32];
    fn labels(&self, id: PointId) -> &LabelSet;
    fn metric(&self) -> MetricKind;

    fn raw_distance(&self, id: PointId, target: &[f32]) -> f64 {
        metric::raw_distance(self.vector(id), target, self.metric())
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The search corpus: `n` vectors of dimension `dim`, each with a label set.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    vectors: VectorMatrix,
    labels: Vec<LabelSet>,
    label_universe: u32,
    metric: MetricKind,
}

impl LabeledDataset {
    /// Validates and assembles a dataset. `label_universe` overrides the
    /// inferred `1 + max label`, and must not be smaller than it.
    pub fn new(
        vectors: VectorMatrix,
        labels: Vec<LabelSet>,
        metric: MetricKind,
        label_universe: Option<u32>,
    ) -> Result<Self> {
        if vectors.rows == 0 || vectors.dim == 0 {
            return Err(Error::Invalid("dataset needs N >= 1 and d >= 1".into()));
        }
        if labels.len() != vectors.rows {
            return Err(Error::Invalid(format!(
                "{} label sets for {} vectors",
                labels.len(),
                vectors.rows
            )));
        }
        if let Some(pos) = vectors.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite value in vector {} (coordinate {})",
                pos / vectors.dim,
                pos % vectors.dim
            )));
        }
        if metric == MetricKind::Cosine {
            if let Some(i) = vectors
                .iter_rows()
                .position(|r| metric::squared_norm(r) == 0.0)
            {
                return Err(Error::Invalid(format!(
                    "vector {i} has zero norm under cosine metric"
                )));
            }
        }
        let inferred = labels
            .iter()
            .filter_map(LabelSet::max_label)
            .max()
            .map_or(0, |m| m + 1);
        let label_universe = match label_universe {
            Some(m) if m < inferred => {
                return Err(Error::Invalid(format!(
                    "configured label universe {m} is smaller than the inferred {inferred}"
                )))
            }
            Some(m) => m,
            None => inferred,
        };
        Ok(LabeledDataset {
            vectors,
            labels,
            label_universe,
            metric,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim
    }

    pub fn vectors(&self) -> &VectorMatrix {
        &self.vectors
    }

    pub fn all_labels(&self) -> &[LabelSet] {
        &self.labels
    }

    /// Size `m` of the label universe; every label id is `< m`.
    pub fn label_universe(&self) -> u32 {
        self.label_universe
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    /// Checks that a query vector can be scored against this dataset.
    pub fn check_query(&self, query: &FilteredQuery) -> Result<()> {
        if query.vector.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: query.vector.len(),
                right: self.dim(),
            });
        }
        if self.metric == MetricKind::Cosine && metric::squared_norm(&query.vector) == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if let Some(max) = query.required.max_label() {
            if max >= self.label_universe {
                return Err(Error::Invalid(format!(
                    "query {} requires label {max} outside universe of {}",
                    query.id, self.label_universe
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over sizes, metric, vector bytes and label lists.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"fann-dataset-v1");
        h.update((self.len() as u32).to_le_bytes());
        h.update((self.dim() as u32).to_le_bytes());
        h.update([self.metric.to_byte()]);
        for x in &self.vectors.data {
            h.update(x.to_le_bytes());
        }
        for set in &self.labels {
            h.update((set.len() as u32).to_le_bytes());
            for l in set.iter() {
                h.update(l.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

impl VectorStore for LabeledDataset {
    fn len(&self) -> usize {
        self.vectors.rows
    }

    #[inline]
    fn vector(&self, id: PointId) -> &[f32] {
        self.vectors.row(id as usize)
    }

    #[inline]
    fn labels(&self, id: PointId) -> &LabelSet {
        &self.labels[id as usize]
    }

    fn metric(&self) -> MetricKind {
        self.metric
    }
}

/// A query vector with its required label set (AND semantics).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilteredQuery {
    pub id: u32,
    pub vector: Vec<f32>,
    pub required: LabelSet,
}

impl FilteredQuery {
    pub fn filtered(id: u32, vector: Vec<f32>, required: LabelSet) -> Result<Self> {
        if required.is_empty() {
            return Err(Error::EmptyQueryLabels);
        }
        Ok(FilteredQuery {
            id,
            vector,
            required,
        })
    }

    pub fn unfiltered(id: u32, vector: Vec<f32>) -> Self {
        FilteredQuery {
            id,
            vector,
            required: LabelSet::empty(),
        }
    }

    pub fn is_filtered(&self) -> bool {
        !self.required.is_empty()
    }
}

/// Assembles filtered queries from a vector matrix and per-row label sets.
pub fn queries_from_parts(
    vectors: &VectorMatrix,
    labels: Vec<LabelSet>,
) -> Result<Vec<FilteredQuery>> {
    if vectors.rows != labels.len() {
        return Err(Error::Invalid(format!(
            "{} query label lines for {} query vectors",
            labels.len(),
            vectors.rows
        )));
    }
    vectors
        .iter_rows()
        .zip(labels)
        .enumerate()
        .map(|(i, (v, l))| {
            FilteredQuery::filtered(i as u32, v.to_vec(), l)
                .map_err(|_| Error::Invalid(format!("query {i} has an empty label set")))
        })
        .collect()
}

/// Seeded split into disjoint train and eval subsets, each kept in input order.
///
/// The train subset gets `round(train_fraction * n)` queries, clamped so that
/// both subsets are nonempty.
pub fn split_queries(
    queries: &[FilteredQuery],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<FilteredQuery>, Vec<FilteredQuery>)> {
    let n = queries.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 queries to split, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, eval): (Vec<_>, Vec<_>) =
        queries.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(q, _)| q).collect(),
        eval.into_iter().map(|(q, _)| q).collect(),
    ))
}
