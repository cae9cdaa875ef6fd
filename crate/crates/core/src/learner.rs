//! Learning the label-mismatch penalty `w_m` from preference triplets.
//!
//! For a training query, the exact unfiltered top-k list is split into
//! positives (full filter match) and, per positive, the negatives that sit
//! strictly closer to the query while missing at least one required label.
//! Each (positive, negative) pair asks that the positive outrank the negative
//! by a margin `epsilon` under the weighted distance, with a slack variable
//! absorbing violations. The LP
//!
//! ```text
//! min  w + alpha * mean(s_t)
//! s.t. d_pos + w (1 - m_pos) + epsilon <= d_neg + w (1 - m_neg) + s_t,  w >= 0, s_t >= 0
//! ```
//!
//! has a single non-slack variable once `m_pos = 1`, and each slack is
//! `max(0, a_t - c_t w)` with `a_t = d_pos + epsilon - d_neg` and
//! `c_t = 1 - m_neg`. The objective is therefore convex and piecewise linear
//! in `w` with breakpoints `a_t / c_t`, and [`solve_w`] minimises it exactly
//! by evaluating every breakpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_queries, FilteredQuery, LabeledDataset, VectorStore};
use crate::error::{Error, Result};
use crate::metric::{self, MetricKind, WeightModel};
use crate::oracle::{self, GroundTruth, GroundTruthMode, Neighbor};
use crate::PointId;

/// Slack above this is counted as a violated ranking constraint.
pub const VIOLATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub query_id: u32,
    pub pos_id: PointId,
    pub neg_id: PointId,
    pub d_pos: f64,
    pub m_pos: f64,
    pub d_neg: f64,
    pub m_neg: f64,
}

impl PreferenceTriplet {
    /// Constant part of the slack, `d_pos + w(1-m_pos) + eps - d_neg` at `w = 0`.
    fn offset(&self, epsilon: f64) -> f64 {
        self.d_pos + epsilon - self.d_neg
    }

    /// Rate at which increasing `w` reduces the slack.
    fn rate(&self) -> f64 {
        (1.0 - self.m_neg) - (1.0 - self.m_pos)
    }

    pub fn slack(&self, w: f64, epsilon: f64) -> f64 {
        (self.offset(epsilon) - w * self.rate()).max(0.0)
    }

    /// The `w` at which this triplet's slack reaches zero, if that happens
    /// for some finite `w`.
    pub fn breakpoint(&self, epsilon: f64) -> Option<f64> {
        let rate = self.rate();
        (rate > 0.0).then(|| self.offset(epsilon) / rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub alpha_grid: Vec<f64>,
    /// Depth of the exact unfiltered list each training query is ranked against.
    pub learner_gt_k: usize,
    pub max_triplets: usize,
    pub subsample_seed: u64,
    /// Share of training queries held out to pick alpha; 0 disables the split.
    pub validation_fraction: f64,
    pub validation_seed: u64,
    /// Extra ranking depths whose learned `w_m` is reported for comparison.
    pub sensitivity_depths: Vec<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            epsilon: 0.01,
            alpha_grid: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            learner_gt_k: 100,
            max_triplets: 1_000_000,
            subsample_seed: 0,
            validation_fraction: 0.25,
            validation_seed: 0,
            sensitivity_depths: vec![50, 200],
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Invalid(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.alpha_grid.is_empty()
            || self.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite()))
        {
            return Err(Error::Invalid(
                "alpha grid must be nonempty with every alpha > 0".into(),
            ));
        }
        if self.learner_gt_k == 0 || self.max_triplets == 0 {
            return Err(Error::Invalid(
                "learner_gt_k and max_triplets must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Invalid(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the triplets of one query from its ranked candidate list.
/// `ranked` holds `(id, raw distance, match score)`; order does not matter.
pub fn triplets_from_ranking(
    query_id: u32,
    ranked: &[(PointId, f64, f64)],
) -> Vec<PreferenceTriplet> {
    let mut out = Vec::new();
    for &(pos_id, d_pos, m_pos) in ranked.iter().filter(|r| r.2 == 1.0) {
        for &(neg_id, d_neg, m_neg) in ranked {
            if m_neg < 1.0 && d_neg < d_pos {
                out.push(PreferenceTriplet {
                    query_id,
                    pos_id,
                    neg_id,
                    d_pos,
                    m_pos,
                    d_neg,
                    m_neg,
                });
            }
        }
    }
    out
}

fn score_ranking(
    ds: &LabeledDataset,
    q: &FilteredQuery,
    ranked: &[Neighbor],
) -> Result<Vec<(PointId, f64, f64)>> {
    ranked
        .iter()
        .map(|n| {
            Ok((
                n.id,
                n.distance,
                metric::query_match_score(&q.required, ds.labels(n.id))?,
            ))
        })
        .collect()
}

/// Keeps `max` evenly strided triplets, with a seeded starting offset.
pub fn subsample(
    triplets: Vec<PreferenceTriplet>,
    max: usize,
    seed: u64,
) -> Vec<PreferenceTriplet> {
    if triplets.len() <= max {
        return triplets;
    }
    let stride = triplets.len() as f64 / max as f64;
    // SplitMix-style scramble of the seed into an offset in [0, stride).
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    let offset = ((z ^ (z >> 31)) as f64 / u64::MAX as f64) * stride;
    (0..max)
        .map(|i| triplets[((offset + i as f64 * stride) as usize).min(triplets.len() - 1)])
        .collect()
}

/// Exact unfiltered rankings at depth `depth` for each query, scored against
/// the query's required labels.
fn rank_queries(
    ds: &LabeledDataset,
    queries: &[FilteredQuery],
    depth: usize,
) -> Result<Vec<Vec<(PointId, f64, f64)>>> {
    let depth = depth.min(ds.len());
    queries
        .par_iter()
        .map(|q| {
            let top = oracle::exact_unfiltered_topk(ds, &q.vector, depth)?;
            score_ranking(ds, q, &top)
        })
        .collect()
}

fn collect_triplets(
    queries: &[FilteredQuery],
    rankings: &[Vec<(PointId, f64, f64)>],
    depth: usize,
    config: &LearnerConfig,
) -> Result<Vec<PreferenceTriplet>> {
    // rankings are sorted ascending, so a prefix is the shallower top list
    let all: Vec<PreferenceTriplet> = queries
        .iter()
        .zip(rankings)
        .flat_map(|(q, r)| triplets_from_ranking(q.id, &r[..depth.min(r.len())]))
        .collect();
    if all.is_empty() {
        return Err(Error::NoTriplets);
    }
    Ok(subsample(all, config.max_triplets, config.subsample_seed))
}

/// Triplets for `train` at depth `config.learner_gt_k`.
pub fn extract_triplets(
    ds: &LabeledDataset,
    train: &[FilteredQuery],
    config: &LearnerConfig,
) -> Result<Vec<PreferenceTriplet>> {
    if train.is_empty() {
        return Err(Error::Invalid("no training queries".into()));
    }
    let rankings = rank_queries(ds, train, config.learner_gt_k)?;
    collect_triplets(train, &rankings, config.learner_gt_k, config)
}

/// Triplets from a precomputed unfiltered ground truth, whose row `i`
/// belongs to the query with id `i`.
pub fn triplets_from_ground_truth(
    ds: &LabeledDataset,
    queries: &[FilteredQuery],
    gt: &GroundTruth,
    config: &LearnerConfig,
) -> Result<Vec<PreferenceTriplet>> {
    if gt.mode != GroundTruthMode::UnfilteredExact {
        return Err(Error::Invalid(
            "weight learning needs unfiltered ground truth".into(),
        ));
    }
    let rankings = queries
        .iter()
        .map(|q| {
            let row = gt.rows.get(q.id as usize).ok_or_else(|| {
                Error::Invalid(format!("ground truth has no row for query {}", q.id))
            })?;
            score_ranking(ds, q, row)
        })
        .collect::<Result<Vec<_>>>()?;
    collect_triplets(queries, &rankings, config.learner_gt_k, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackSummary {
    pub objective: f64,
    pub mean_slack: f64,
    /// Fraction of triplets with positive slack.
    pub violation_rate: f64,
}

pub fn objective_at(
    w: f64,
    triplets: &[PreferenceTriplet],
    alpha: f64,
    epsilon: f64,
) -> Result<SlackSummary> {
    if triplets.is_empty() {
        return Err(Error::NoTriplets);
    }
    if w.is_nan() || w < 0.0 {
        return Err(Error::Invalid(format!("candidate weight {w} must be >= 0")));
    }
    let (mut total, mut violated) = (0.0f64, 0usize);
    for t in triplets {
        let s = t.slack(w, epsilon);
        total += s;
        if s > VIOLATION_TOLERANCE {
            violated += 1;
        }
    }
    let n = triplets.len() as f64;
    let mean_slack = total / n;
    Ok(SlackSummary {
        objective: w + alpha * mean_slack,
        mean_slack,
        violation_rate: violated as f64 / n,
    })
}

/// Exact minimiser of `w + alpha * mean slack` over `w >= 0`; the smallest
/// one when several `w` tie.
pub fn solve_w(triplets: &[PreferenceTriplet], alpha: f64, epsilon: f64) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::NoTriplets);
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Invalid(format!("alpha must be > 0, got {alpha}")));
    }
    let scale = alpha / triplets.len() as f64;
    // (breakpoint, offset, rate) for triplets whose slack can still shrink at w > 0
    let mut pieces: Vec<(f64, f64, f64)> = Vec::with_capacity(triplets.len());
    let mut constant = 0.0;
    for t in triplets {
        let (a, c) = (t.offset(epsilon), t.rate());
        match t.breakpoint(epsilon) {
            Some(b) if b > 0.0 => pieces.push((b, a, c)),
            Some(_) => {}
            None => constant += a.max(0.0),
        }
    }
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));

    // suffix sums over pieces still active (breakpoint strictly above w)
    let (mut a_sum, mut c_sum) = pieces
        .iter()
        .fold((0.0, 0.0), |(a, c), p| (a + p.1, c + p.2));
    let eval = |w: f64, a_sum: f64, c_sum: f64| w + scale * (constant + a_sum - w * c_sum);

    let mut best_w = 0.0;
    let mut best_f = eval(0.0, a_sum, c_sum);
    let mut i = 0;
    while i < pieces.len() {
        let b = pieces[i].0;
        while i < pieces.len() && pieces[i].0 == b {
            a_sum -= pieces[i].1;
            c_sum -= pieces[i].2;
            i += 1;
        }
        let f = eval(b, a_sum, c_sum);
        if f < best_f * (1.0 - 1e-12) {
            best_f = f;
            best_w = b;
        }
    }
    Ok(best_w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub w_m: f64,
    pub objective: f64,
    pub mean_slack: f64,
    pub violation_rate: f64,
    pub validation_violation_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSensitivity {
    pub depth: usize,
    pub triplet_count: usize,
    pub w_m: f64,
}

/// Outcome of weight learning, serialised as the weights JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    pub w_m: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub metric_kind: MetricKind,
    pub triplet_count: usize,
    pub objective: f64,
    pub mean_slack: f64,
    pub violation_rate: f64,
    pub validation_triplet_count: usize,
    pub learner_gt_k: usize,
    pub per_alpha: Vec<AlphaRow>,
    #[serde(default)]
    pub depth_sensitivity: Vec<DepthSensitivity>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl LearnerReport {
    pub fn model(&self) -> WeightModel {
        WeightModel {
            w_m: self.w_m,
            alpha_slack: self.alpha,
            epsilon: self.epsilon,
            provenance: metric::Provenance::Learned,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn no_triplets(config: &LearnerConfig, metric_kind: MetricKind) -> Self {
        LearnerReport {
            w_m: 0.0,
            alpha: config.alpha_grid[0],
            epsilon: config.epsilon,
            metric_kind,
            triplet_count: 0,
            objective: 0.0,
            mean_slack: 0.0,
            violation_rate: 0.0,
            validation_triplet_count: 0,
            learner_gt_k: config.learner_gt_k,
            per_alpha: Vec::new(),
            depth_sensitivity: Vec::new(),
            warnings: vec![
                "no preference triplets: the filter never binds on the training queries, w_m = 0"
                    .into(),
            ],
        }
    }
}

/// Solves for every alpha and keeps the one whose `w_m` violates the fewest
/// validation triplets, preferring the smaller `w_m` on ties.
pub fn grid_search_alpha(
    triplets: &[PreferenceTriplet],
    config: &LearnerConfig,
    validation: &[PreferenceTriplet],
) -> Result<LearnerReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    if validation.is_empty() {
        warnings.push("empty validation set: alpha chosen by training violation rate".to_string());
    }
    let rows = config
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let w = solve_w(triplets, alpha, config.epsilon)?;
            let fit = objective_at(w, triplets, alpha, config.epsilon)?;
            let val = if validation.is_empty() {
                None
            } else {
                Some(objective_at(w, validation, alpha, config.epsilon)?.violation_rate)
            };
            Ok(AlphaRow {
                alpha,
                w_m: w,
                objective: fit.objective,
                mean_slack: fit.mean_slack,
                violation_rate: fit.violation_rate,
                validation_violation_rate: val,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = rows
        .iter()
        .min_by(|a, b| {
            let ka = a.validation_violation_rate.unwrap_or(a.violation_rate);
            let kb = b.validation_violation_rate.unwrap_or(b.violation_rate);
            ka.total_cmp(&kb).then(a.w_m.total_cmp(&b.w_m))
        })
        .expect("alpha grid is nonempty")
        .clone();
    Ok(LearnerReport {
        w_m: chosen.w_m,
        alpha: chosen.alpha,
        epsilon: config.epsilon,
        metric_kind: MetricKind::default(),
        triplet_count: triplets.len(),
        objective: chosen.objective,
        mean_slack: chosen.mean_slack,
        violation_rate: chosen.violation_rate,
        validation_triplet_count: validation.len(),
        learner_gt_k: config.learner_gt_k,
        per_alpha: rows,
        depth_sensitivity: Vec::new(),
        warnings,
    })
}

/// Full pipeline over the training queries: hold out a validation subset,
/// extract triplets by exact unfiltered scans, grid-search alpha, and report
/// how `w_m` moves with the ranking depth.
pub fn learn_weights(
    ds: &LabeledDataset,
    train: &[FilteredQuery],
    config: &LearnerConfig,
) -> Result<LearnerReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("no training queries".into()));
    }
    let (fit, val) = if config.validation_fraction > 0.0 && train.len() >= 2 {
        let (val, fit) = split_queries(train, config.validation_fraction, config.validation_seed)?;
        (fit, val)
    } else {
        (train.to_vec(), Vec::new())
    };
    let max_depth = config
        .sensitivity_depths
        .iter()
        .copied()
        .chain([config.learner_gt_k])
        .max()
        .unwrap();
    let fit_rank = rank_queries(ds, &fit, max_depth)?;
    let val_rank = rank_queries(ds, &val, config.learner_gt_k)?;

    let triplets = match collect_triplets(&fit, &fit_rank, config.learner_gt_k, config) {
        Ok(t) => t,
        Err(Error::NoTriplets) => {
            log::warn!("no preference triplets found; falling back to w_m = 0");
            return Ok(LearnerReport::no_triplets(config, ds.metric()));
        }
        Err(e) => return Err(e),
    };
    let validation = match collect_triplets(&val, &val_rank, config.learner_gt_k, config) {
        Ok(t) => t,
        Err(Error::NoTriplets) => Vec::new(),
        Err(e) => return Err(e),
    };
    let mut report = grid_search_alpha(&triplets, config, &validation)?;
    report.metric_kind = ds.metric();
    for &depth in &config.sensitivity_depths {
        let entry = match collect_triplets(&fit, &fit_rank, depth, config) {
            Ok(t) => DepthSensitivity {
                depth,
                triplet_count: t.len(),
                w_m: solve_w(&t, report.alpha, config.epsilon)?,
            },
            Err(Error::NoTriplets) => DepthSensitivity {
                depth,
                triplet_count: 0,
                w_m: 0.0,
            },
            Err(e) => return Err(e),
        };
        report.depth_sensitivity.push(entry);
    }
    Ok(report)
}
