use crate::dataset::VectorStore;
use crate::metric::{label_match_score, penalized, raw_distance};
use crate::oracle::{neighbor_order, Neighbor};
use crate::PointId;

/// Weighted distance between two stored points, penalised by the asymmetric
/// overlap of `from`'s labels with `to`'s.
#[inline]
pub(crate) fn point_distance<S: VectorStore + ?Sized>(
    store: &S,
    from: PointId,
    to: PointId,
    w_m: f64,
) -> f64 {
    let raw = raw_distance(store.vector(from), store.vector(to), store.metric());
    penalized(
        raw,
        label_match_score(store.labels(from), store.labels(to)),
        w_m,
    )
}

/// Robust prune under the weighted distance.
///
/// Candidates are taken in order of `D(p, c)`; each accepted `c` removes every
/// remaining `c'` with `alpha * D(c, c') <= D(p, c')`. Stops at `max_degree`
/// accepted points. `p` itself and duplicates are ignored. Returns ids sorted
/// ascending.
pub fn robust_prune<S: VectorStore + ?Sized>(
    store: &S,
    p: PointId,
    candidates: &[PointId],
    alpha: f64,
    max_degree: usize,
    w_m: f64,
) -> Vec<PointId> {
    let mut ids: Vec<PointId> = candidates.iter().copied().filter(|&c| c != p).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut pool: Vec<Neighbor> = ids
        .into_iter()
        .map(|c| Neighbor::new(c, point_distance(store, p, c, w_m)))
        .collect();
    pool.sort_by(neighbor_order);

    let mut alive = vec![true; pool.len()];
    let mut out = Vec::with_capacity(max_degree);
    for i in 0..pool.len() {
        if !alive[i] {
            continue;
        }
        let chosen = pool[i].id;
        out.push(chosen);
        if out.len() >= max_degree {
            break;
        }
        for j in i + 1..pool.len() {
            if alive[j]
                && alpha * point_distance(store, chosen, pool[j].id, w_m) <= pool[j].distance
            {
                alive[j] = false;
            }
        }
    }
    out.sort_unstable();
    out
}
