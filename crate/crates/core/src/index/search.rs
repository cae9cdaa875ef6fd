use crate::dataset::VectorStore;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::{label_match_score, penalized, ComparisonCounter};
use crate::oracle::{neighbor_order, Neighbor};
use crate::PointId;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    /// Best `k` scored points by weighted distance, ascending.
    pub top: Vec<Neighbor>,
    /// Points whose out-lists were expanded, in expansion order.
    pub visited: Vec<PointId>,
    /// Raw vector-distance evaluations performed.
    pub comparisons: u64,
}

struct Candidate {
    n: Neighbor,
    expanded: bool,
}

struct SeenSet(Vec<u64>);

impl SeenSet {
    fn new(n: usize) -> Self {
        SeenSet(vec![0; n.div_ceil(64)])
    }

    /// Marks `id`, returning whether it was already marked.
    #[inline]
    fn test_and_set(&mut self, id: PointId) -> bool {
        let (w, b) = (id as usize / 64, id as usize % 64);
        let hit = self.0[w] & (1 << b) != 0;
        self.0[w] |= 1 << b;
        hit
    }
}

/// Best-first beam search under `D(t, u) = d(t, u) + w_m * (1 - m(S_t, S_u))`.
///
/// Keeps the `l_search` best scored points; stops once all of them have been
/// expanded. Each point is scored at most once, so `comparisons` equals the
/// number of distinct points scored. `k = 0` is allowed and returns only the
/// visited list, which is what graph construction consumes.
#[allow(clippy::too_many_arguments)]
pub fn weighted_greedy_search<S: VectorStore + ?Sized>(
    graph: &[Vec<PointId>],
    store: &S,
    target: &[f32],
    target_labels: &LabelSet,
    entries: &[PointId],
    k: usize,
    l_search: usize,
    w_m: f64,
) -> Result<SearchOutcome> {
    let n = store.len();
    if entries.is_empty() {
        return Err(Error::Invalid(
            "search needs at least one entry point".into(),
        ));
    }
    if let Some(bad) = entries.iter().find(|&&e| e as usize >= n) {
        return Err(Error::Invalid(format!(
            "entry point {bad} out of range for {n} points"
        )));
    }
    if l_search == 0 || l_search < k {
        return Err(Error::Invalid(format!(
            "L_search = {l_search} must be >= max(k = {k}, 1)"
        )));
    }

    let mut counter = ComparisonCounter::new();
    let mut seen = SeenSet::new(n);
    let mut pool: Vec<Candidate> = Vec::with_capacity(l_search + 1);
    let score = |id: PointId, counter: &mut ComparisonCounter| {
        counter.record();
        let raw = store.raw_distance(id, target);
        Neighbor::new(
            id,
            penalized(raw, label_match_score(target_labels, store.labels(id)), w_m),
        )
    };
    let insert = |pool: &mut Vec<Candidate>, cand: Neighbor| {
        if pool.len() >= l_search && neighbor_order(&cand, &pool[pool.len() - 1].n).is_ge() {
            return;
        }
        let at = pool.partition_point(|c| neighbor_order(&c.n, &cand).is_lt());
        pool.insert(
            at,
            Candidate {
                n: cand,
                expanded: false,
            },
        );
        pool.truncate(l_search);
    };

    for &e in entries {
        if !seen.test_and_set(e) {
            let cand = score(e, &mut counter);
            insert(&mut pool, cand);
        }
    }

    let mut visited = Vec::new();
    while let Some(pos) = pool.iter().position(|c| !c.expanded) {
        pool[pos].expanded = true;
        let v = pool[pos].n.id;
        visited.push(v);
        for &u in &graph[v as usize] {
            if seen.test_and_set(u) {
                continue;
            }
            let cand = score(u, &mut counter);
            insert(&mut pool, cand);
        }
    }

    Ok(SearchOutcome {
        top: pool.iter().take(k).map(|c| c.n).collect(),
        visited,
        comparisons: counter.get(),
    })
}
