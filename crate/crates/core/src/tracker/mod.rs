//! Online time warping of a live posteriogram against a stored reference.

mod events;
mod offline;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posteriogram::StrippedPosteriogram;

pub use events::{read_events, write_events, EventFormat};
pub use offline::{run_offline, OfflineAlignment};

/// Default search window, in reference frames.
pub const DEFAULT_WINDOW_FRAMES: usize = 8000;

/// `1 − u·v / (‖u‖‖v‖)`, or 1 when either vector is all zeros.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(u.len(), v.len()));
    }
    Ok(cosine_with_norms(u, sq_norm(u), v, sq_norm(v)))
}

fn sq_norm(u: &[f32]) -> f64 {
    u.iter().map(|&x| x as f64 * x as f64).sum()
}

/// Takes squared norms so that identical vectors give exactly 0.
fn cosine_with_norms(u: &[f32], nu2: f64, v: &[f32], nv2: f64) -> f64 {
    if nu2 == 0.0 || nv2 == 0.0 {
        return 1.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
    1.0 - dot / (nu2 * nv2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Accumulated cost divided by the number of cells on the path.
    PathLength,
    /// Accumulated cost as is.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub window_frames: usize,
    pub monotonic: bool,
    pub normalization: Normalization,
    /// Period of the incoming target frames; defaults to the reference's.
    pub target_frame_period_ms: Option<f64>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            window_frames: DEFAULT_WINDOW_FRAMES,
            monotonic: true,
            normalization: Normalization::PathLength,
            target_frame_period_ms: None,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_frames < 3 {
            return Err(Error::Config(format!(
                "window of {} frames is below the minimum of 3",
                self.window_frames
            )));
        }
        Ok(())
    }

    /// Reference context covered by the window, in seconds.
    pub fn context_seconds(&self, frame_period_ms: f64) -> f64 {
        self.window_frames as f64 * frame_period_ms / 1000.0
    }
}

/// Blank-stripped reference rows with cached squared norms, shareable across trackers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReference {
    rows: StrippedPosteriogram,
    norms: Vec<f64>,
}

impl TrackingReference {
    pub fn new(rows: StrippedPosteriogram) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("reference has no non-blank frames".into()));
        }
        let norms = rows.data.iter_rows().map(sq_norm).collect();
        Ok(TrackingReference { rows, norms })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn stripped(&self) -> &StrippedPosteriogram {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.data.cols()
    }

    fn cost(&self, m: usize, target: &[f32], target_norm: f64) -> f64 {
        cosine_with_norms(self.rows.data.row(m), self.norms[m], target, target_norm)
    }
}

/// One tracking report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEvent {
    /// Target frame index before blank stripping.
    pub target_index: usize,
    pub target_time_ms: f64,
    /// Reference frame index before blank stripping.
    pub reference_index: usize,
    pub reference_time_ms: f64,
    pub normalized_cost: f64,
    /// Set when the tracker sits on the last reference frame.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exhausted: bool,
}

/// Incremental OLTW state for one live stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    reference: Arc<TrackingReference>,
    config: TrackerConfig,
    /// Accumulated cost `D(n, ·)` over the active window.
    cost_row: Vec<f64>,
    /// Cells on the chosen path to each window cell.
    len_row: Vec<u32>,
    window_start: usize,
    current_position: usize,
    origin: usize,
    target_count: usize,
    last_distance_evals: usize,
    max_target_touched: Option<usize>,
}

impl TrackerState {
    pub fn new(reference: Arc<TrackingReference>, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrackerState {
            reference,
            config,
            cost_row: Vec::new(),
            len_row: Vec::new(),
            window_start: 0,
            current_position: 0,
            origin: 0,
            target_count: 0,
            last_distance_evals: 0,
            max_target_touched: None,
        })
    }

    pub fn reference(&self) -> &Arc<TrackingReference> {
        &self.reference
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Last reported position, as a stripped reference index.
    pub fn position(&self) -> usize {
        self.current_position
    }

    pub fn window_start(&self) -> usize {
        self.window_start
    }

    pub fn window_len(&self) -> usize {
        self.cost_row.len()
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    /// Local-cost evaluations performed by the most recent step.
    pub fn last_distance_evals(&self) -> usize {
        self.last_distance_evals
    }

    /// Highest target frame index the tracker has computed a distance against.
    pub fn max_target_index_touched(&self) -> Option<usize> {
        self.max_target_touched
    }

    /// Accumulated costs and path lengths over the current window.
    pub fn cost_window(&self) -> (&[f64], &[u32]) {
        (&self.cost_row, &self.len_row)
    }

    pub fn reset(&mut self) {
        self.cost_row.clear();
        self.len_row.clear();
        self.window_start = 0;
        self.current_position = 0;
        self.origin = 0;
        self.target_count = 0;
        self.last_distance_evals = 0;
        self.max_target_touched = None;
    }

    /// Restarts tracking with the warping path anchored at `reference_index`.
    pub fn seed_position(&mut self, reference_index: usize) -> Result<()> {
        let len = self.reference.len();
        if reference_index >= len {
            return Err(Error::Index {
                index: reference_index,
                len,
            });
        }
        self.reset();
        self.current_position = reference_index;
        self.origin = reference_index;
        self.window_start = self.window_for(reference_index).0;
        Ok(())
    }

    /// `[start, end)` of the window centered on `center`, clamped to the reference.
    fn window_for(&self, center: usize) -> (usize, usize) {
        let n = self.reference.len();
        let w = self.config.window_frames;
        let start = center.saturating_sub(w / 2).min(n.saturating_sub(w));
        (start, (start + w).min(n))
    }

    /// Consumes one target row; `target_index` is its original frame index.
    pub fn step(&mut self, target_row: &[f32], target_index: usize) -> Result<AlignmentEvent> {
        if target_row.len() != self.reference.dim() {
            return Err(Error::Dimension(self.reference.dim(), target_row.len()));
        }
        let reference = Arc::clone(&self.reference);
        let target_norm = sq_norm(target_row);
        self.max_target_touched = Some(self.max_target_touched.map_or(target_index, |m| m.max(target_index)));
        let normalized = self.advance(|m| reference.cost(m, target_row, target_norm));
        Ok(self.event(target_index, normalized))
    }

    /// One DTW row over the window, with `local(m)` the cost against reference `m`.
    /// Returns the normalized cost at the reported position.
    fn advance(&mut self, mut local: impl FnMut(usize) -> f64) -> f64 {
        let (start, end) = self.window_for(self.current_position);
        let first_row = self.target_count == 0;
        let prev_start = self.window_start;
        let prev_cost = std::mem::take(&mut self.cost_row);
        let prev_len = std::mem::take(&mut self.len_row);
        let prev = |m: usize| -> Option<(f64, u32)> {
            let i = m.checked_sub(prev_start)?;
            prev_cost.get(i).map(|&c| (c, prev_len[i]))
        };

        let mut cost = Vec::with_capacity(end - start);
        let mut lens = Vec::with_capacity(end - start);
        for m in start..end {
            let c = local(m);
            let left = (m > start).then(|| (cost[m - start - 1], lens[m - start - 1]));
            let best = if first_row {
                if m == self.origin {
                    Some((0.0, 0))
                } else if m > self.origin {
                    left
                } else {
                    None
                }
            } else {
                // Ties prefer diagonal, then vertical, then horizontal.
                let diag = m.checked_sub(1).and_then(&prev);
                let up = prev(m);
                [diag, up, left]
                    .into_iter()
                    .flatten()
                    .fold(None, |acc: Option<(f64, u32)>, cand| match acc {
                        Some(a) if a.0 <= cand.0 => Some(a),
                        _ => Some(cand),
                    })
            };
            match best {
                Some((d, l)) if d.is_finite() => {
                    cost.push(c + d);
                    lens.push(l + 1);
                }
                _ => {
                    cost.push(f64::INFINITY);
                    lens.push(0);
                }
            }
        }
        self.last_distance_evals = end - start;

        let score = |i: usize| match self.config.normalization {
            Normalization::PathLength => cost[i] / lens[i] as f64,
            Normalization::Raw => cost[i],
        };
        // Equal scores go to the cell nearest the diagonal continuation,
        // then to the lower index.
        let expected = if first_row {
            self.origin
        } else {
            self.current_position + 1
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..cost.len() {
            if !cost[i].is_finite() {
                continue;
            }
            let s = score(i);
            let better = best.is_none_or(|(b, bs)| {
                s < bs || (s == bs && (start + i).abs_diff(expected) < (start + b).abs_diff(expected))
            });
            if better {
                best = Some((i, s));
            }
        }
        let (idx, normalized) = best
            .map(|(i, s)| (start + i, s))
            .unwrap_or((self.current_position, f64::INFINITY));
        let reported = if self.config.monotonic && !first_row {
            idx.max(self.current_position)
        } else {
            idx
        };
        let normalized = if reported != idx {
            let i = reported - start;
            if cost[i].is_finite() {
                score(i)
            } else {
                f64::INFINITY
            }
        } else {
            normalized
        };

        self.cost_row = cost;
        self.len_row = lens;
        self.window_start = start;
        self.current_position = reported;
        self.target_count += 1;
        normalized
    }

    fn event(&self, target_index: usize, normalized_cost: f64) -> AlignmentEvent {
        let sp = self.reference.stripped();
        let period = sp.original_frame_period_ms;
        let target_period = self.config.target_frame_period_ms.unwrap_or(period);
        let reference_index = sp.index_map[self.current_position];
        AlignmentEvent {
            target_index,
            target_time_ms: target_index as f64 * target_period,
            reference_index,
            reference_time_ms: reference_index as f64 * period,
            normalized_cost,
            exhausted: self.current_position + 1 == sp.len(),
        }
    }
}

#[cfg(test)]
mod tests;
