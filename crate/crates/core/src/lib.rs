//! Filter-aware approximate nearest neighbor search.
//!
//! Vectors carry label sets and queries carry a required label set (AND
//! semantics). Candidates are ranked by a weighted distance
//! `d(q, v) + w_m * (1 - match(q, v))`, where the penalty weight `w_m` is
//! learned from ground-truth preference triplets by a small linear program.
//! The same weighted distance drives construction of a Vamana-style graph
//! and the beam search over it. A selectivity-based planner routes highly
//! selective queries to an exact scan instead.
//!
//! Module map:
//! - [`dataset`]: labeled vectors, queries, fbin / label / ground-truth files,
//!   synthetic generators.
//! - [`metric`]: raw distances, match scores, the weighted distance.
//! - [`oracle`]: exact brute-force retrieval and ground truth.
//! - [`learner`]: preference triplets and the penalty-weight LP.
//! - [`index`]: graph build, robust prune, weighted greedy search, index files.
//! - [`planner`] and [`eval`]: query routing, Recall@k and the benchmark harness.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod index;
pub mod labels;
pub mod learner;
pub mod metric;
pub mod oracle;
pub mod planner;

pub use dataset::{FilteredQuery, LabeledDataset, VectorMatrix};
pub use error::{Error, Result};
pub use labels::LabelSet;
pub use metric::{ComparisonCounter, MetricKind, Provenance, WeightModel};
pub use oracle::{GroundTruth, GroundTruthMode, Neighbor};

/// Dense point identifier. Ids are row indices into the dataset.
pub type PointId = u32;
