//! Full-matrix DTW with backtracking.

use super::{cosine_with_norms, sq_norm, AlignmentEvent};
use crate::error::{Error, Result};
use crate::posteriogram::StrippedPosteriogram;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineAlignment {
    /// `(target, reference)` stripped indices from `(0, 0)` to the end.
    pub path: Vec<(usize, usize)>,
    pub total_cost: f64,
    /// One event per target frame, at the first path cell of that frame.
    pub events: Vec<AlignmentEvent>,
}

/// Accumulated-cost table for a full `n x m` local-cost matrix.
///
/// Same recursion and tie order (diagonal, vertical, horizontal) as the
/// online tracker.
pub(crate) fn accumulate(local: &[f64], n: usize, m: usize) -> (Vec<f64>, Vec<u8>) {
    const DIAG: u8 = 0;
    const UP: u8 = 1;
    const LEFT: u8 = 2;
    let mut d = vec![f64::INFINITY; n * m];
    let mut from = vec![DIAG; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = local[i * m + j];
            if i == 0 && j == 0 {
                d[0] = c;
                continue;
            }
            let mut best = (f64::INFINITY, DIAG);
            let cands = [
                (i > 0 && j > 0).then(|| (d[(i - 1) * m + j - 1], DIAG)),
                (i > 0).then(|| (d[(i - 1) * m + j], UP)),
                (j > 0).then(|| (d[i * m + j - 1], LEFT)),
            ];
            for (v, dir) in cands.into_iter().flatten() {
                if v < best.0 {
                    best = (v, dir);
                }
            }
            d[i * m + j] = c + best.0;
            from[i * m + j] = best.1;
        }
    }
    (d, from)
}

/// Aligns two complete stripped posteriograms with unconstrained DTW.
pub fn run_offline(reference: &StrippedPosteriogram, target: &StrippedPosteriogram) -> Result<OfflineAlignment> {
    if reference.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput("offline alignment needs non-empty sequences".into()));
    }
    if reference.data.cols() != target.data.cols() {
        return Err(Error::Dimension(reference.data.cols(), target.data.cols()));
    }
    let (n, m) = (target.len(), reference.len());
    let ref_norms: Vec<f64> = reference.data.iter_rows().map(sq_norm).collect();
    let mut local = Vec::with_capacity(n * m);
    for t in target.data.iter_rows() {
        let tn = sq_norm(t);
        for (j, r) in reference.data.iter_rows().enumerate() {
            local.push(cosine_with_norms(r, ref_norms[j], t, tn));
        }
    }
    let (d, from) = accumulate(&local, n, m);

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        match from[i * m + j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();

    let period = reference.original_frame_period_ms;
    let target_period = target.original_frame_period_ms;
    let mut events: Vec<AlignmentEvent> = Vec::with_capacity(n);
    let mut len = 0usize;
    for &(ti, rj) in &path {
        len += 1;
        if events.len() == ti {
            let r = reference.index_map[rj];
            let t = target.index_map[ti];
            events.push(AlignmentEvent {
                target_index: t,
                target_time_ms: t as f64 * target_period,
                reference_index: r,
                reference_time_ms: r as f64 * period,
                normalized_cost: d[ti * m + rj] / len as f64,
                exhausted: rj + 1 == m,
            });
        }
    }

    Ok(OfflineAlignment {
        path,
        total_cost: d[n * m - 1],
        events,
    })
}
