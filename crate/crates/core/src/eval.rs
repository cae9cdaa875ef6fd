//! Recall@k, the three-way method comparison and CSV output.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FilteredQuery, LabeledDataset, VectorStore};
use crate::error::{Error, Result};
use crate::index::{EntryMode, GraphIndex, SearchParams};
use crate::labels::LabelSet;
use crate::metric::WeightModel;
use crate::oracle::{GroundTruth, GroundTruthMode, Neighbor};
use crate::planner::{Planner, PlannerConfig, Route};
use crate::PointId;

/// Fraction of `truth[..min(k, |truth|)]` found in `retrieved[..k]`, or
/// `None` when the truth row is empty.
pub fn recall_at_k(retrieved: &[PointId], truth: &[Neighbor], k: usize) -> Option<f64> {
    assert!(k >= 1, "recall needs k >= 1");
    let denom = k.min(truth.len());
    if denom == 0 {
        return None;
    }
    let want = &truth[..denom];
    let hits = retrieved
        .iter()
        .take(k)
        .enumerate()
        .filter(|&(i, id)| want.iter().any(|t| t.id == *id) && !retrieved[..i].contains(id))
        .count();
    Some(hits as f64 / denom as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Integrated,
    Fixed,
    Post,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Integrated => "integrated",
            Method::Fixed => "fixed",
            Method::Post => "post",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "integrated" => Ok(Method::Integrated),
            "fixed" => Ok(Method::Fixed),
            "post" => Ok(Method::Post),
            other => Err(Error::Invalid(format!("unknown method `{other}`"))),
        }
    }
}

pub const UNFILTERED_INTEGRATED: &str = "unfiltered_integrated";
pub const UNFILTERED_ZERO: &str = "unfiltered_zero";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub l_search: usize,
    pub k: usize,
    pub recall_at_k: f64,
    pub mean_comparisons: f64,
    pub graph_routed: usize,
    pub brute_routed: usize,
    pub excluded_queries: usize,
    pub w_m: f64,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str =
    "method,L_search,k,recall_at_k,mean_comparisons,graph_routed,brute_routed,excluded_queries,w_m,wall_ms";

pub fn write_csv<W: Write>(rows: &[EvalRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.3},{},{},{},{},{:.3}",
            r.method,
            r.l_search,
            r.k,
            r.recall_at_k,
            r.mean_comparisons,
            r.graph_routed,
            r.brute_routed,
            r.excluded_queries,
            r.w_m,
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn csv_string(rows: &[EvalRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub l_sweep: Vec<usize>,
    pub k: usize,
    /// Penalties tried by the fixed baseline; the best per L_search is kept.
    pub fixed_penalties: Vec<f64>,
    /// Post-filtering keeps `ceil(L_search * factor)` candidates before
    /// filtering; 1.0 keeps the search pool as is.
    pub post_overprovision: f64,
    pub planner: PlannerConfig,
    pub entry_mode: EntryMode,
    /// Zeroes wall times so repeated runs produce identical CSV.
    pub deterministic: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: vec![Method::Integrated, Method::Fixed, Method::Post],
            l_sweep: vec![10, 20, 50, 100, 200],
            k: 10,
            fixed_penalties: vec![0.1, 0.3, 1.0],
            post_overprovision: 1.0,
            planner: PlannerConfig::default(),
            entry_mode: EntryMode::LabelStarts,
            deterministic: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("k must be >= 1".into()));
        }
        if self.l_sweep.is_empty() || self.l_sweep.iter().any(|&l| l < self.k) {
            return Err(Error::Invalid(format!(
                "every L_search must be >= k = {}",
                self.k
            )));
        }
        if self.methods.contains(&Method::Fixed)
            && (self.fixed_penalties.is_empty()
                || self
                    .fixed_penalties
                    .iter()
                    .any(|p| !(p.is_finite() && *p >= 0.0)))
        {
            return Err(Error::Invalid(
                "fixed penalties must be finite and >= 0".into(),
            ));
        }
        if !(self.post_overprovision >= 1.0 && self.post_overprovision.is_finite()) {
            return Err(Error::Invalid("post_overprovision must be >= 1".into()));
        }
        self.planner.validate()
    }
}

/// Everything a benchmark run reads.
pub struct BenchmarkInputs<'a> {
    pub dataset: &'a LabeledDataset,
    pub queries: &'a [FilteredQuery],
    /// Filtered ground truth aligned with `queries`.
    pub truth: &'a GroundTruth,
    /// Built with the learned model.
    pub integrated: &'a GraphIndex,
    /// Built with `w_m = 0`.
    pub zero: &'a GraphIndex,
    pub model: WeightModel,
    /// Unfiltered ground truth aligned with `queries`; enables the
    /// unfiltered-quality rows.
    pub unfiltered_truth: Option<&'a GroundTruth>,
}

struct QueryOutcome {
    recall: Option<f64>,
    comparisons: u64,
    route: Route,
}

fn aggregate(
    method: &str,
    l_search: usize,
    k: usize,
    w_m: f64,
    outcomes: &[QueryOutcome],
    wall_ms: f64,
) -> EvalRow {
    let counted: Vec<f64> = outcomes.iter().filter_map(|o| o.recall).collect();
    let recall = if counted.is_empty() {
        0.0
    } else {
        counted.iter().sum::<f64>() / counted.len() as f64
    };
    let comps: u64 = outcomes.iter().map(|o| o.comparisons).sum();
    EvalRow {
        method: method.to_string(),
        l_search,
        k,
        recall_at_k: recall,
        mean_comparisons: if outcomes.is_empty() {
            0.0
        } else {
            comps as f64 / outcomes.len() as f64
        },
        graph_routed: outcomes.iter().filter(|o| o.route == Route::Graph).count(),
        brute_routed: outcomes.iter().filter(|o| o.route == Route::Brute).count(),
        excluded_queries: outcomes.iter().filter(|o| o.recall.is_none()).count(),
        w_m,
        wall_ms,
    }
}

fn check_alignment(
    queries: &[FilteredQuery],
    truth: &GroundTruth,
    mode: GroundTruthMode,
    k: usize,
) -> Result<()> {
    if truth.mode != mode {
        return Err(Error::Invalid(format!(
            "expected {mode:?} ground truth, got {:?}",
            truth.mode
        )));
    }
    if truth.rows.len() != queries.len() {
        return Err(Error::Invalid(format!(
            "ground truth has {} rows for {} queries",
            truth.rows.len(),
            queries.len()
        )));
    }
    if truth.k < k {
        return Err(Error::Invalid(format!(
            "ground truth depth {} < k = {k}",
            truth.k
        )));
    }
    Ok(())
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64() * 1e3))
}

/// Post-filtering: unweighted search from the medoid, then keep only the
/// pool entries satisfying the filter.
fn post_filter_search(
    planner: &Planner,
    index: &GraphIndex,
    ds: &LabeledDataset,
    q: &FilteredQuery,
    l_search: usize,
    k: usize,
    overprovision: f64,
) -> Result<(Vec<PointId>, u64, Route)> {
    let (route, _) = planner.route(&q.required);
    if route == Route::Brute {
        let p = SearchParams::new(l_search, k, WeightModel::zero());
        let r = planner.plan_and_search(index, ds, q, &p)?;
        return Ok((r.top.iter().map(|n| n.id).collect(), r.comparisons, r.route));
    }
    let pool = ((l_search as f64) * overprovision).ceil() as usize;
    let params = SearchParams {
        l_search: pool,
        k: pool.min(ds.len()),
        model: WeightModel::zero(),
        entry_mode: EntryMode::MedoidOnly,
    };
    let out = index.search(ds, &q.vector, &LabelSet::empty(), &params)?;
    let ids = out
        .top
        .iter()
        .filter(|n| q.required.is_subset_of(ds.labels(n.id)))
        .take(k)
        .map(|n| n.id)
        .collect();
    Ok((ids, out.comparisons, route))
}

fn run_queries<F>(
    queries: &[FilteredQuery],
    truth: &GroundTruth,
    k: usize,
    f: F,
) -> Result<Vec<QueryOutcome>>
where
    F: Fn(&FilteredQuery) -> Result<(Vec<PointId>, u64, Route)> + Sync,
{
    queries
        .par_iter()
        .zip(truth.rows.par_iter())
        .map(|(q, row)| {
            let (ids, comparisons, route) = f(q)?;
            Ok(QueryOutcome {
                recall: recall_at_k(&ids, row, k),
                comparisons,
                route,
            })
        })
        .collect()
}

/// Evaluates every configured method at every `L_search`, in method-major
/// order, followed by the unfiltered-quality rows when unfiltered truth is
/// supplied.
pub fn run_benchmark(inputs: &BenchmarkInputs<'_>, cfg: &BenchmarkConfig) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    let ds = inputs.dataset;
    check_alignment(
        inputs.queries,
        inputs.truth,
        GroundTruthMode::FilteredExact,
        cfg.k,
    )?;
    for idx in [inputs.integrated, inputs.zero] {
        if idx.fingerprint != ds.fingerprint() {
            return Err(Error::Invalid(
                "index was built for a different dataset".into(),
            ));
        }
    }
    let planner = Planner::new(ds, cfg.planner.clone())?;
    let k = cfg.k;
    let wall = |ms: f64| if cfg.deterministic { 0.0 } else { ms };
    let mut rows = Vec::new();

    for &method in &cfg.methods {
        for &l in &cfg.l_sweep {
            let row = match method {
                Method::Integrated => {
                    let params = SearchParams {
                        entry_mode: cfg.entry_mode,
                        ..SearchParams::new(l, k, inputs.model)
                    };
                    let (out, ms) = timed(|| {
                        run_queries(inputs.queries, inputs.truth, k, |q| {
                            let r = planner.plan_and_search(inputs.integrated, ds, q, &params)?;
                            Ok((r.top.iter().map(|n| n.id).collect(), r.comparisons, r.route))
                        })
                    })?;
                    aggregate(method.name(), l, k, inputs.model.w_m, &out, wall(ms))
                }
                Method::Fixed => {
                    let mut best: Option<EvalRow> = None;
                    for &p in &cfg.fixed_penalties {
                        let params = SearchParams {
                            entry_mode: cfg.entry_mode,
                            ..SearchParams::new(l, k, WeightModel::fixed(p)?)
                        };
                        let (out, ms) = timed(|| {
                            run_queries(inputs.queries, inputs.truth, k, |q| {
                                let r = planner.plan_and_search(inputs.zero, ds, q, &params)?;
                                Ok((r.top.iter().map(|n| n.id).collect(), r.comparisons, r.route))
                            })
                        })?;
                        let row = aggregate(method.name(), l, k, p, &out, wall(ms));
                        if best
                            .as_ref()
                            .is_none_or(|b| row.recall_at_k > b.recall_at_k)
                        {
                            best = Some(row);
                        }
                    }
                    best.expect("at least one penalty")
                }
                Method::Post => {
                    let (out, ms) = timed(|| {
                        run_queries(inputs.queries, inputs.truth, k, |q| {
                            post_filter_search(
                                &planner,
                                inputs.zero,
                                ds,
                                q,
                                l,
                                k,
                                cfg.post_overprovision,
                            )
                        })
                    })?;
                    aggregate(method.name(), l, k, 0.0, &out, wall(ms))
                }
            };
            log::info!("{} L={} recall@{}={:.4}", row.method, l, k, row.recall_at_k);
            rows.push(row);
        }
    }

    if let Some(ut) = inputs.unfiltered_truth {
        rows.extend(unfiltered_quality(inputs, ut, cfg)?);
    }
    Ok(rows)
}

/// Unfiltered Recall@k of the weighted-build index against the `w_m = 0`
/// index, searching both with no label requirement.
pub fn unfiltered_quality(
    inputs: &BenchmarkInputs<'_>,
    truth: &GroundTruth,
    cfg: &BenchmarkConfig,
) -> Result<Vec<EvalRow>> {
    check_alignment(
        inputs.queries,
        truth,
        GroundTruthMode::UnfilteredExact,
        cfg.k,
    )?;
    let ds = inputs.dataset;
    let k = cfg.k;
    let mut rows = Vec::new();
    for (name, index, w) in [
        (UNFILTERED_INTEGRATED, inputs.integrated, inputs.model.w_m),
        (UNFILTERED_ZERO, inputs.zero, 0.0),
    ] {
        for &l in &cfg.l_sweep {
            let params = SearchParams::new(l, k, WeightModel::fixed(w)?);
            let (out, ms) = timed(|| {
                run_queries(inputs.queries, truth, k, |q| {
                    let r = index.search(ds, &q.vector, &LabelSet::empty(), &params)?;
                    Ok((
                        r.top.iter().map(|n| n.id).collect(),
                        r.comparisons,
                        Route::Graph,
                    ))
                })
            })?;
            rows.push(aggregate(
                name,
                l,
                k,
                w,
                &out,
                if cfg.deterministic { 0.0 } else { ms },
            ));
        }
    }
    Ok(rows)
}

pub fn find_row<'a>(rows: &'a [EvalRow], method: &str, l_search: usize) -> Option<&'a EvalRow> {
    rows.iter()
        .find(|r| r.method == method && r.l_search == l_search)
}
