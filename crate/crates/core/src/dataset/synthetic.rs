//! Seeded Gaussian-cluster datasets with Zipf-distributed, cluster-correlated labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FilteredQuery, LabeledDataset, VectorMatrix};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::MetricKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCountRange {
    pub min: usize,
    pub max: usize,
}

/// How query label sets are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryLabelSource {
    /// Uniformly among the most frequent labels.
    #[default]
    Frequent,
    /// Among the most frequent labels that do not belong to the pool of the
    /// cluster the query vector is drawn near, so satisfying points tend to
    /// sit far from the query.
    OffCluster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "m")]
    pub label_universe: u32,
    /// Zipf exponent for label frequency; 0 means uniform.
    pub label_skew: f64,
    pub labels_per_point: LabelCountRange,
    pub cluster_count: usize,
    /// Probability that each label of a point is drawn from its cluster's pool.
    pub label_cluster_correlation: f64,
    pub seed: u64,
    #[serde(default = "defaults::num_queries")]
    pub num_queries: usize,
    #[serde(default = "defaults::query_labels")]
    pub query_labels: LabelCountRange,
    /// Number of most frequent labels queries draw from.
    #[serde(default = "defaults::query_label_pool")]
    pub query_label_pool: usize,
    #[serde(default)]
    pub query_label_source: QueryLabelSource,
    /// Per-coordinate std of cluster centers.
    #[serde(default = "defaults::cluster_spread")]
    pub cluster_spread: f64,
    /// Per-coordinate std of points around their center.
    #[serde(default = "defaults::unit")]
    pub cluster_std: f64,
    /// Per-coordinate std of query vectors around their center.
    #[serde(default = "defaults::unit")]
    pub query_noise: f64,
    #[serde(default)]
    pub metric: MetricKind,
}

mod defaults {
    use super::LabelCountRange;

    pub fn num_queries() -> usize {
        200
    }
    pub fn query_labels() -> LabelCountRange {
        LabelCountRange { min: 1, max: 2 }
    }
    pub fn query_label_pool() -> usize {
        10
    }
    pub fn cluster_spread() -> f64 {
        10.0
    }
    pub fn unit() -> f64 {
        1.0
    }
}

impl SyntheticSpec {
    /// Spec with the given sizes and seed, other fields at their defaults.
    pub fn new(n: usize, dim: usize, label_universe: u32, seed: u64) -> Self {
        SyntheticSpec {
            n,
            dim,
            label_universe,
            label_skew: 1.0,
            labels_per_point: LabelCountRange { min: 1, max: 3 },
            cluster_count: 8,
            label_cluster_correlation: 0.5,
            seed,
            num_queries: defaults::num_queries(),
            query_labels: defaults::query_labels(),
            query_label_pool: defaults::query_label_pool(),
            query_label_source: QueryLabelSource::Frequent,
            cluster_spread: defaults::cluster_spread(),
            cluster_std: 1.0,
            query_noise: 1.0,
            metric: MetricKind::Euclidean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.n == 0 || self.dim == 0 || self.label_universe == 0 || self.cluster_count == 0 {
            return bad("n, d, m and cluster_count must all be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.label_cluster_correlation) {
            return bad(format!(
                "label_cluster_correlation {} outside [0, 1]",
                self.label_cluster_correlation
            ));
        }
        if !(self.label_skew.is_finite() && self.label_skew >= 0.0) {
            return bad(format!(
                "label_skew {} must be finite and >= 0",
                self.label_skew
            ));
        }
        for (name, r) in [
            ("labels_per_point", self.labels_per_point),
            ("query_labels", self.query_labels),
        ] {
            if r.min > r.max {
                return bad(format!("{name}: min {} > max {}", r.min, r.max));
            }
            if r.max > self.label_universe as usize {
                return bad(format!(
                    "{name}: max {} exceeds label universe m = {}",
                    r.max, self.label_universe
                ));
            }
        }
        if self.num_queries > 0 && (self.query_labels.min == 0 || self.query_label_pool == 0) {
            return bad(
                "filtered queries need query_labels.min >= 1 and a nonempty label pool".into(),
            );
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("cluster_std", self.cluster_std),
            ("query_noise", self.query_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Labels in the preferred pool of `cluster`.
    pub fn cluster_pool(&self, cluster: usize) -> Vec<u32> {
        (0..self.label_universe)
            .filter(|l| *l as usize % self.cluster_count == cluster)
            .collect()
    }
}

/// Draws one index from `weights` restricted to entries not yet `taken`.
fn draw_weighted(
    rng: &mut ChaCha8Rng,
    candidates: &[u32],
    weights: &[f64],
    taken: &[u32],
) -> Option<u32> {
    let total: f64 = candidates
        .iter()
        .filter(|l| !taken.contains(l))
        .map(|&l| weights[l as usize])
        .sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    let mut last = None;
    for &l in candidates.iter().filter(|l| !taken.contains(l)) {
        last = Some(l);
        x -= weights[l as usize];
        if x < 0.0 {
            return Some(l);
        }
    }
    last
}

/// Generated dataset plus its filtered query set and, per point and per query,
/// the cluster it was drawn from.
pub struct SyntheticData {
    pub dataset: LabeledDataset,
    pub queries: Vec<FilteredQuery>,
    pub point_clusters: Vec<usize>,
    pub query_clusters: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.label_universe as usize;
    let d = spec.dim;
    let zipf: Vec<f64> = (0..m)
        .map(|l| 1.0 / ((l + 1) as f64).powf(spec.label_skew))
        .collect();
    let all_labels: Vec<u32> = (0..spec.label_universe).collect();
    let pools: Vec<Vec<u32>> = (0..spec.cluster_count)
        .map(|c| spec.cluster_pool(c))
        .collect();

    let center_dist =
        Normal::new(0.0, spec.cluster_spread).map_err(|e| Error::Invalid(e.to_string()))?;
    let point_dist =
        Normal::new(0.0, spec.cluster_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let query_dist =
        Normal::new(0.0, spec.query_noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let centers: Vec<Vec<f64>> = (0..spec.cluster_count)
        .map(|_| (0..d).map(|_| center_dist.sample(&mut rng)).collect())
        .collect();

    let mut data = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut point_clusters = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c = rng.random_range(0..spec.cluster_count);
        point_clusters.push(c);
        data.extend(
            centers[c]
                .iter()
                .map(|x| (x + point_dist.sample(&mut rng)) as f32),
        );
        let count = rng.random_range(spec.labels_per_point.min..=spec.labels_per_point.max);
        let mut chosen: Vec<u32> = Vec::with_capacity(count);
        while chosen.len() < count {
            let from_pool = rng.random::<f64>() < spec.label_cluster_correlation;
            let pick = if from_pool {
                draw_weighted(&mut rng, &pools[c], &zipf, &chosen)
                    .or_else(|| draw_weighted(&mut rng, &all_labels, &zipf, &chosen))
            } else {
                draw_weighted(&mut rng, &all_labels, &zipf, &chosen)
            };
            match pick {
                Some(l) => chosen.push(l),
                None => break,
            }
        }
        labels.push(LabelSet::new(chosen));
    }

    let mut freq = vec![0usize; m];
    for set in &labels {
        for l in set.iter() {
            freq[l as usize] += 1;
        }
    }
    let mut by_freq: Vec<u32> = (0..spec.label_universe)
        .filter(|l| freq[*l as usize] > 0)
        .collect();
    by_freq.sort_by(|a, b| freq[*b as usize].cmp(&freq[*a as usize]).then(a.cmp(b)));

    let mut queries = Vec::with_capacity(spec.num_queries);
    let mut query_clusters = Vec::with_capacity(spec.num_queries);
    for qi in 0..spec.num_queries {
        let c = rng.random_range(0..spec.cluster_count);
        query_clusters.push(c);
        let vector: Vec<f32> = centers[c]
            .iter()
            .map(|x| (x + query_dist.sample(&mut rng)) as f32)
            .collect();
        let candidates: Vec<u32> = match spec.query_label_source {
            QueryLabelSource::Frequent => by_freq.clone(),
            QueryLabelSource::OffCluster => by_freq
                .iter()
                .copied()
                .filter(|l| *l as usize % spec.cluster_count != c)
                .collect(),
        };
        let candidates: Vec<u32> = candidates.into_iter().take(spec.query_label_pool).collect();
        if candidates.is_empty() {
            return Err(Error::Invalid(format!(
                "no candidate labels available for query {qi}"
            )));
        }
        let count = rng
            .random_range(spec.query_labels.min..=spec.query_labels.max)
            .min(candidates.len());
        let uniform = vec![1.0; m];
        let mut chosen = Vec::with_capacity(count);
        while chosen.len() < count {
            match draw_weighted(&mut rng, &candidates, &uniform, &chosen) {
                Some(l) => chosen.push(l),
                None => break,
            }
        }
        queries.push(FilteredQuery::filtered(
            qi as u32,
            vector,
            LabelSet::new(chosen),
        )?);
    }

    let dataset = LabeledDataset::new(
        VectorMatrix::new(spec.n, d, data)?,
        labels,
        spec.metric,
        Some(spec.label_universe),
    )?;
    Ok(SyntheticData {
        dataset,
        queries,
        point_clusters,
        query_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = SyntheticSpec::new(1000, 8, 20, 1);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        let bits = |ds: &LabeledDataset| {
            ds.vectors()
                .data
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a.dataset), bits(&b.dataset));
        assert_eq!(a.dataset.all_labels(), b.dataset.all_labels());
        assert_eq!(a.queries, b.queries);
    }

    #[test]
    fn label_counts_respect_bounds() {
        let mut spec = SyntheticSpec::new(500, 4, 20, 9);
        spec.labels_per_point = LabelCountRange { min: 2, max: 4 };
        let data = generate_synthetic(&spec).unwrap();
        for set in data.dataset.all_labels() {
            assert!((2..=4).contains(&set.len()));
            assert!(set.iter().all(|l| l < 20));
        }
        for q in &data.queries {
            assert!((1..=2).contains(&q.required.len()));
        }
    }

    #[test]
    fn full_correlation_keeps_labels_in_cluster_pool() {
        let mut spec = SyntheticSpec::new(800, 4, 40, 5);
        spec.cluster_count = 4;
        spec.label_cluster_correlation = 1.0;
        let data = generate_synthetic(&spec).unwrap();
        for (set, c) in data.dataset.all_labels().iter().zip(&data.point_clusters) {
            assert!(
                set.iter().all(|l| l as usize % 4 == *c),
                "{set} outside pool {c}"
            );
        }
    }

    #[test]
    fn infeasible_label_count_rejected() {
        let mut spec = SyntheticSpec::new(10, 2, 5, 0);
        spec.labels_per_point = LabelCountRange { min: 1, max: 8 };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Invalid(_))));
    }

    #[test]
    fn off_cluster_queries_avoid_own_pool() {
        let mut spec = SyntheticSpec::new(600, 4, 32, 2);
        spec.query_label_source = QueryLabelSource::OffCluster;
        spec.cluster_count = 4;
        let data = generate_synthetic(&spec).unwrap();
        for (q, c) in data.queries.iter().zip(&data.query_clusters) {
            assert!(q.required.iter().all(|l| l as usize % 4 != *c));
        }
    }

    #[test]
    fn zero_skew_marginals_are_uniform() {
        let mut spec = SyntheticSpec::new(20_000, 2, 20, 11);
        spec.label_skew = 0.0;
        spec.label_cluster_correlation = 0.0;
        spec.labels_per_point = LabelCountRange { min: 2, max: 2 };
        spec.num_queries = 0;
        let data = generate_synthetic(&spec).unwrap();
        let mut freq = [0f64; 20];
        for set in data.dataset.all_labels() {
            for l in set.iter() {
                freq[l as usize] += 1.0;
            }
        }
        // each point carries 2 distinct labels uniformly: P(label) = 2/20
        let (n, p) = (20_000.0f64, 0.1f64);
        let (mean, sigma) = (n * p, (n * p * (1.0 - p)).sqrt());
        for (l, f) in freq.iter().enumerate() {
            assert!(
                (f - mean).abs() <= 3.0 * sigma,
                "label {l}: {f} vs {mean} ± {sigma}"
            );
        }
    }
}
