//! Raw vector distances, label match scores and the combined weighted distance.
//!
//! There are two match functions. [`query_match_score`] divides by the query's
//! label count and rejects an empty query set. [`label_match_score`] is the
//! asymmetric Jaccard overlap between two data points, normalised by its first
//! argument, and treats an empty first set as a full match.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    #[default]
    Euclidean,
    Cosine,
}

impl MetricKind {
    pub fn to_byte(self) -> u8 {
        match self {
            MetricKind::Euclidean => 0,
            MetricKind::Cosine => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(MetricKind::Euclidean),
            1 => Some(MetricKind::Cosine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(MetricKind::Euclidean),
            "cosine" => Ok(MetricKind::Cosine),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Checked distance between two vectors.
pub fn vector_distance(a: &[f32], b: &[f32], kind: MetricKind) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if kind == MetricKind::Cosine && (squared_norm(a) == 0.0 || squared_norm(b) == 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(raw_distance(a, b, kind))
}

/// Unchecked distance used on hot paths. Callers guarantee equal lengths and,
/// for cosine, nonzero norms (a zero norm yields 1.0).
#[inline]
pub fn raw_distance(a: &[f32], b: &[f32], kind: MetricKind) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match kind {
        MetricKind::Euclidean => {
            let mut acc = 0.0f64;
            for (x, y) in a.iter().zip(b) {
                let d = *x as f64 - *y as f64;
                acc += d * d;
            }
            acc.sqrt()
        }
        MetricKind::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            for (x, y) in a.iter().zip(b) {
                let (x, y) = (*x as f64, *y as f64);
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return 1.0;
            }
            (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
        }
    }
}

pub(crate) fn squared_norm(a: &[f32]) -> f64 {
    a.iter().map(|x| (*x as f64) * (*x as f64)).sum()
}

/// Fraction of the query's labels carried by the candidate.
pub fn query_match_score(query: &LabelSet, point: &LabelSet) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::EmptyQueryLabels);
    }
    Ok(query.intersection_len(point) as f64 / query.len() as f64)
}

/// Asymmetric Jaccard overlap `|a ∩ b| / |a|`; 1.0 when `a` is empty.
#[inline]
pub fn label_match_score(a: &LabelSet, b: &LabelSet) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.intersection_len(b) as f64 / a.len() as f64
}

/// Where a penalty weight came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Learned,
    Fixed,
    Zero,
}

/// Penalty weight for label mismatch, plus the LP settings that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub w_m: f64,
    /// LP slack trade-off; 0 unless learned.
    pub alpha_slack: f64,
    /// LP margin; 0 unless learned.
    pub epsilon: f64,
    pub provenance: Provenance,
}

impl WeightModel {
    pub fn zero() -> Self {
        WeightModel {
            w_m: 0.0,
            alpha_slack: 0.0,
            epsilon: 0.0,
            provenance: Provenance::Zero,
        }
    }

    pub fn fixed(w_m: f64) -> Result<Self> {
        let m = WeightModel {
            w_m,
            alpha_slack: 0.0,
            epsilon: 0.0,
            provenance: Provenance::Fixed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn learned(w_m: f64, alpha_slack: f64, epsilon: f64) -> Result<Self> {
        let m = WeightModel {
            w_m,
            alpha_slack,
            epsilon,
            provenance: Provenance::Learned,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_m.is_finite() && self.w_m >= 0.0) {
            return Err(Error::Invalid(format!(
                "w_m must be finite and >= 0, got {}",
                self.w_m
            )));
        }
        if self.provenance == Provenance::Learned && (self.epsilon.is_nan() || self.epsilon <= 0.0)
        {
            return Err(Error::Invalid(
                "learned weight model needs epsilon > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Number of raw vector-distance evaluations performed by one search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ComparisonCounter {
    count: u64,
}

impl ComparisonCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn record(&mut self) {
        self.count += 1;
    }

    pub fn add(&mut self, n: u64) {
        self.count += n;
    }

    pub fn get(&self) -> u64 {
        self.count
    }
}

/// `raw + w_m * (1 - matched)`. Each call stands for one raw-distance
/// evaluation and bumps the counter once.
#[inline]
pub fn weighted_distance(
    raw: f64,
    matched: f64,
    model: &WeightModel,
    counter: &mut ComparisonCounter,
) -> f64 {
    counter.record();
    penalized(raw, matched, model.w_m)
}

#[inline]
pub(crate) fn penalized(raw: f64, matched: f64, w_m: f64) -> f64 {
    raw + w_m * (1.0 - matched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ls(v: &[u32]) -> LabelSet {
        LabelSet::new(v.iter().copied())
    }

    #[test]
    fn euclidean_345() {
        let d = vector_distance(&[0.0, 0.0], &[3.0, 4.0], MetricKind::Euclidean).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        let v = [0.3f32, -1.7, 2.0];
        assert!(vector_distance(&v, &v, MetricKind::Cosine).unwrap().abs() < 1e-12);
        let d = vector_distance(&[1.0, 0.0], &[0.0, 1.0], MetricKind::Cosine).unwrap();
        assert_eq!(d, 1.0);
        let opposite = vector_distance(&[1.0, 0.0], &[-1.0, 0.0], MetricKind::Cosine).unwrap();
        assert_eq!(opposite, 2.0);
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            vector_distance(&[1.0], &[1.0, 2.0], MetricKind::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            vector_distance(&[0.0, 0.0], &[1.0, 2.0], MetricKind::Cosine),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn query_match_examples() {
        assert_eq!(
            query_match_score(&ls(&[1, 2]), &ls(&[1, 2, 3])).unwrap(),
            1.0
        );
        assert_eq!(query_match_score(&ls(&[1, 2]), &ls(&[2, 9])).unwrap(), 0.5);
        assert_eq!(query_match_score(&ls(&[4]), &ls(&[])).unwrap(), 0.0);
        assert!(matches!(
            query_match_score(&ls(&[]), &ls(&[1])),
            Err(Error::EmptyQueryLabels)
        ));
    }

    #[test]
    fn label_match_examples() {
        assert!((label_match_score(&ls(&[1, 2, 3]), &ls(&[1])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(label_match_score(&ls(&[5]), &ls(&[5])), 1.0);
        assert_eq!(label_match_score(&ls(&[]), &ls(&[7])), 1.0);
    }

    #[test]
    fn label_match_is_asymmetric() {
        let (a, b) = (ls(&[1, 2]), ls(&[1]));
        assert_eq!(label_match_score(&a, &b), 0.5);
        assert_eq!(label_match_score(&b, &a), 1.0);
    }

    #[test]
    fn full_match_iff_subset_on_five_labels() {
        let sets: Vec<LabelSet> = (0u32..32)
            .map(|mask| (0..5).filter(|b| mask & (1 << b) != 0).collect())
            .collect();
        for q in sets.iter().filter(|s| !s.is_empty()) {
            for v in &sets {
                let full = query_match_score(q, v).unwrap() == 1.0;
                let subset = q.iter().all(|l| v.contains(l));
                assert_eq!(full, subset, "q={q} v={v}");
            }
        }
    }

    #[test]
    fn weighted_distance_examples() {
        let mut c = ComparisonCounter::new();
        let w = WeightModel::fixed(0.2).unwrap();
        assert!((weighted_distance(0.3, 0.5, &w, &mut c) - 0.4).abs() < 1e-15);
        assert_eq!(weighted_distance(0.7, 1.0, &w, &mut c), 0.7);
        assert_eq!(
            weighted_distance(0.3, 0.0, &WeightModel::zero(), &mut c),
            0.3
        );
        assert_eq!(c.get(), 3);
    }

    #[test]
    fn weight_model_validation() {
        assert!(WeightModel::fixed(-0.1).is_err());
        assert!(WeightModel::learned(0.1, 1.0, 0.0).is_err());
        assert!(WeightModel::learned(0.1, 1.0, 0.01).is_ok());
    }

    proptest! {
        #[test]
        fn weighted_distance_monotone(raw in 0.0f64..10.0, m1 in 0.0f64..1.0, m2 in 0.0f64..1.0,
                                      w1 in 0.0f64..5.0, w2 in 0.0f64..5.0) {
            let (lo_m, hi_m) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            let (lo_w, hi_w) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            prop_assert!(penalized(raw, hi_m, lo_w) <= penalized(raw, lo_m, lo_w));
            prop_assert!(penalized(raw, lo_m, lo_w) <= penalized(raw, lo_m, hi_w));
        }

        #[test]
        fn cosine_stays_in_range(a in proptest::collection::vec(-5.0f32..5.0, 4),
                                 b in proptest::collection::vec(-5.0f32..5.0, 4)) {
            prop_assume!(squared_norm(&a) > 1e-6 && squared_norm(&b) > 1e-6);
            let d = vector_distance(&a, &b, MetricKind::Cosine).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
        }
    }
}
