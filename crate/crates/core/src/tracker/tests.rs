use super::*;
use crate::matrix::Matrix;
use crate::posteriogram::{PhonemeVocab, N_CLASSES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rows(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            let r: Vec<f32> = (0..N_CLASSES).map(|_| rng.random_range(0.01f32..1.0)).collect();
            let s: f32 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Matrix::from_rows(N_CLASSES, rows).unwrap()
}

fn stripped(data: Matrix) -> StrippedPosteriogram {
    let n = data.rows();
    StrippedPosteriogram {
        data,
        index_map: (0..n).collect(),
        original_frame_period_ms: 40.0,
        vocab: PhonemeVocab::default(),
    }
}

fn tracker(reference: &Matrix, window: usize, monotonic: bool) -> TrackerState {
    let r = Arc::new(TrackingReference::new(stripped(reference.clone())).unwrap());
    TrackerState::new(
        r,
        TrackerConfig {
            window_frames: window,
            monotonic,
            ..TrackerConfig::default()
        },
    )
    .unwrap()
}

fn track_all(state: &mut TrackerState, target: &Matrix) -> Vec<usize> {
    (0..target.rows())
        .map(|t| {
            state.step(target.row(t), t).unwrap();
            state.position()
        })
        .collect()
}

/// Every monotone path from `(0, 0)` to `(n, m)` whose cells stay inside the
/// per-row windows; returns the cheapest cost and its length.
fn brute_force_cell(local: &[Vec<f64>], windows: &[(usize, usize)], n: usize, m: usize) -> Option<(f64, usize)> {
    let inside = |i: usize, j: usize| j >= windows[i].0 && j < windows[i].1;
    if !inside(n, m) {
        return None;
    }
    if (n, m) == (0, 0) {
        return Some((local[0][0], 1));
    }
    let mut best: Option<(f64, usize)> = None;
    let preds = [
        (n > 0 && m > 0).then(|| (n - 1, m - 1)),
        (n > 0).then(|| (n - 1, m)),
        (m > 0).then(|| (n, m - 1)),
    ];
    for (pi, pj) in preds.into_iter().flatten() {
        if let Some((c, l)) = brute_force_cell(local, windows, pi, pj) {
            if best.is_none_or(|(b, _)| c < b) {
                best = Some((c, l));
            }
        }
    }
    best.map(|(c, l)| (c + local[n][m], l + 1))
}

fn brute_force_positions(reference: &Matrix, target: &Matrix, window: usize, monotonic: bool) -> Vec<usize> {
    let nref = reference.rows();
    let local: Vec<Vec<f64>> = target
        .iter_rows()
        .map(|t| reference.iter_rows().map(|r| cosine_distance(r, t).unwrap()).collect())
        .collect();
    let mut windows = Vec::new();
    let mut reported: Vec<usize> = Vec::new();
    for n in 0..target.rows() {
        let center = reported.last().copied().unwrap_or(0);
        let start = center.saturating_sub(window / 2).min(nref.saturating_sub(window));
        windows.push((start, (start + window).min(nref)));
        let mut best: Option<(usize, f64)> = None;
        for m in windows[n].0..windows[n].1 {
            if let Some((c, l)) = brute_force_cell(&local, &windows, n, m) {
                let s = c / l as f64;
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((m, s));
                }
            }
        }
        let mut pos = best.unwrap().0;
        if monotonic && n > 0 {
            pos = pos.max(*reported.last().unwrap());
        }
        reported.push(pos);
    }
    reported
}

#[test]
fn cosine_examples() {
    assert_eq!(cosine_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-12, true);
    assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    let d = cosine_distance(&[0.6, 0.4], &[0.4, 0.6]).unwrap();
    // 1 − 0.48 / 0.52
    assert!((d - (1.0 - 0.48 / 0.52)).abs() < 1e-7, "{d}");
    assert!((d - 0.0769).abs() < 1e-4);
    assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert!(matches!(
        cosine_distance(&[1.0], &[1.0, 2.0]),
        Err(Error::Dimension(1, 2))
    ));
}

#[test]
fn window_context_in_seconds() {
    let c = TrackerConfig::default();
    assert_eq!(c.window_frames, 8000);
    assert_eq!(c.context_seconds(40.0), 320.0);
}

#[test]
fn tiny_window_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = Arc::new(TrackingReference::new(stripped(random_rows(5, &mut rng))).unwrap());
    let cfg = TrackerConfig {
        window_frames: 2,
        ..TrackerConfig::default()
    };
    assert!(TrackerState::new(r, cfg).is_err());
}

#[test]
fn self_alignment_on_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = random_rows(60, &mut rng);
    for window in [3, 4, 7, 8000] {
        let mut s = tracker(&r, window, true);
        let pos = track_all(&mut s, &r);
        assert_eq!(pos, (0..60).collect::<Vec<_>>(), "window {window}");
    }
}

#[test]
fn self_alignment_with_repeated_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = random_rows(20, &mut rng);
    let mut r = Matrix::zeros(0, base.cols());
    for (i, row) in base.iter_rows().enumerate() {
        for _ in 0..1 + i % 4 {
            r.push_row(row).unwrap();
        }
    }
    let n = r.rows();
    for window in [3, 5, 8000] {
        for mono in [false, true] {
            let mut s = tracker(&r, window, mono);
            assert_eq!(track_all(&mut s, &r), (0..n).collect::<Vec<_>>(), "window {window}");
        }
    }
}

#[test]
fn toy_four_by_four_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..40 {
        let r = random_rows(4, &mut rng);
        let t = random_rows(4, &mut rng);
        for window in [3, 4] {
            for mono in [false, true] {
                let mut s = tracker(&r, window, mono);
                assert_eq!(track_all(&mut s, &t), brute_force_positions(&r, &t, window, mono));
            }
        }
    }
}

#[test]
fn narrow_window_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let r = random_rows(9, &mut rng);
        let t = random_rows(7, &mut rng);
        let mut s = tracker(&r, 4, true);
        assert_eq!(track_all(&mut s, &t), brute_force_positions(&r, &t, 4, true));
    }
}

#[test]
fn distance_evaluations_bounded_by_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = random_rows(300, &mut rng);
    let t = random_rows(400, &mut rng);
    let mut s = tracker(&r, 50, true);
    for i in 0..t.rows() {
        s.step(t.row(i), i).unwrap();
        assert!(s.last_distance_evals() <= 50);
        assert_eq!(s.window_len(), s.last_distance_evals());
    }
}

#[test]
fn reset_equals_fresh_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = random_rows(30, &mut rng);
    let fresh = tracker(&r, 10, true);
    let mut s = fresh.clone();
    track_all(&mut s, &random_rows(12, &mut rng));
    assert_ne!(s, fresh);
    s.reset();
    assert_eq!(s, fresh);
    s.step(r.row(0), 0).unwrap();
    assert_eq!(s.window_start(), 0);
}

#[test]
fn seeding_recenters_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = random_rows(100, &mut rng);
    let mut s = tracker(&r, 20, true);
    s.seed_position(50).unwrap();
    assert_eq!(s.position(), 50);
    s.step(r.row(50), 0).unwrap();
    assert_eq!(s.window_start(), 40);
    assert_eq!(s.position(), 50);
    // Near the end the window is clamped to the reference.
    s.seed_position(98).unwrap();
    s.step(r.row(98), 0).unwrap();
    assert_eq!(s.window_start(), 80);
    assert!(matches!(
        s.seed_position(100),
        Err(Error::Index { index: 100, len: 100 })
    ));
}

#[test]
fn seeded_tracker_follows_a_later_passage() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = random_rows(200, &mut rng);
    let mut s = tracker(&r, 30, true);
    s.seed_position(120).unwrap();
    for (k, t) in (120..160).enumerate() {
        s.step(r.row(t), k).unwrap();
        assert_eq!(s.position(), t);
    }
}

#[test]
fn exhausted_reference_pins_last_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = random_rows(5, &mut rng);
    let mut s = tracker(&r, 8, true);
    let mut last = None;
    for t in 0..5 {
        last = Some(s.step(r.row(t), t).unwrap());
    }
    assert!(last.unwrap().exhausted);
    let e = s.step(r.row(4), 5).unwrap();
    assert_eq!(e.reference_index, 4);
    assert!(e.exhausted);
}

#[test]
fn event_times_use_index_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = random_rows(4, &mut rng);
    let sp = StrippedPosteriogram {
        data: rows.clone(),
        index_map: vec![0, 3, 4, 9],
        original_frame_period_ms: 40.0,
        vocab: PhonemeVocab::default(),
    };
    let mut s = TrackerState::new(Arc::new(TrackingReference::new(sp).unwrap()), TrackerConfig::default()).unwrap();
    let mut events = Vec::new();
    for (k, t) in [2usize, 5, 6, 11].into_iter().enumerate() {
        events.push(s.step(rows.row(k), t).unwrap());
    }
    let refs: Vec<usize> = events.iter().map(|e| e.reference_index).collect();
    assert_eq!(refs, vec![0, 3, 4, 9]);
    assert_eq!(events[1].reference_time_ms, 120.0);
    assert_eq!(events[3].target_time_ms, 440.0);
}

#[test]
fn wrong_row_width_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut s = tracker(&random_rows(5, &mut rng), 8, true);
    assert!(matches!(s.step(&[0.5, 0.5], 0), Err(Error::Dimension(60, 2))));
}

#[test]
fn scaling_local_costs_keeps_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let r = random_rows(40, &mut rng);
        let t = random_rows(50, &mut rng);
        let local: Vec<Vec<f64>> = t
            .iter_rows()
            .map(|row| r.iter_rows().map(|x| cosine_distance(x, row).unwrap()).collect())
            .collect();
        let run = |k: f64| {
            let mut s = tracker(&r, 15, false);
            (0..t.rows())
                .map(|n| {
                    s.advance(|m| k * local[n][m]);
                    s.position()
                })
                .collect::<Vec<_>>()
        };
        let base = run(1.0);
        for k in [0.5, 4.0, 1024.0, 3.0] {
            assert_eq!(run(k), base, "scale {k}");
        }
    }
}

#[test]
fn offline_identical_is_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sp = stripped(random_rows(12, &mut rng));
    let a = run_offline(&sp, &sp).unwrap();
    assert_eq!(a.path, (0..12).map(|i| (i, i)).collect::<Vec<_>>());
    assert!(a.total_cost.abs() < 1e-12);
    assert_eq!(a.events.len(), 12);
}

#[test]
fn offline_repeated_frame_adds_one_vertical_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let r = random_rows(10, &mut rng);
    let mut rows: Vec<Vec<f32>> = r.iter_rows().map(|x| x.to_vec()).collect();
    rows.insert(5, rows[4].clone());
    let t = Matrix::from_rows(N_CLASSES, rows).unwrap();
    let a = run_offline(&stripped(r), &stripped(t)).unwrap();
    let vertical = a
        .path
        .windows(2)
        .filter(|w| w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1)
        .count();
    let horizontal = a
        .path
        .windows(2)
        .filter(|w| w[1].0 == w[0].0 && w[1].1 == w[0].1 + 1)
        .count();
    assert_eq!((vertical, horizontal), (1, 0));
    assert!(a.total_cost.abs() < 1e-12);
}

#[test]
fn offline_beats_random_monotone_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let r = random_rows(10, &mut rng);
        let t = random_rows(10, &mut rng);
        let a = run_offline(&stripped(r.clone()), &stripped(t.clone())).unwrap();
        for _ in 0..50 {
            let (mut i, mut j) = (0usize, 0usize);
            let mut cost = cosine_distance(r.row(0), t.row(0)).unwrap();
            while (i, j) != (9, 9) {
                match (i < 9, j < 9, rng.random_range(0..3)) {
                    (true, true, 0) => (i, j) = (i + 1, j + 1),
                    (true, _, 1) | (true, false, _) => i += 1,
                    _ => j += 1,
                }
                cost += cosine_distance(r.row(j), t.row(i)).unwrap();
            }
            assert!(a.total_cost <= cost + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn full_window_matches_full_table(
        nref in 1usize..30,
        ntgt in 1usize..30,
        seed in any::<u64>(),
        mono in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_rows(nref, &mut rng);
        let t = random_rows(ntgt, &mut rng);
        let mut s = tracker(&r, nref.max(3), mono);
        let online = track_all(&mut s, &t);
        prop_assert_eq!(online, full_table_positions(&r, &t, mono));
    }

    #[test]
    fn monotone_mode_never_regresses(seed in any::<u64>(), window in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_rows(40, &mut rng);
        let t = random_rows(60, &mut rng);
        let mut s = tracker(&r, window, true);
        let pos = track_all(&mut s, &t);
        prop_assert!(pos.windows(2).all(|w| w[0] <= w[1]));
    }
}

/// Unwindowed accumulated-cost table, same recursion and tie-breaking.
pub(crate) fn full_table_positions(reference: &Matrix, target: &Matrix, monotonic: bool) -> Vec<usize> {
    let (n, m) = (target.rows(), reference.rows());
    let mut d = vec![vec![f64::INFINITY; m]; n];
    let mut len = vec![vec![0usize; m]; n];
    let mut out: Vec<usize> = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let c = cosine_distance(reference.row(j), target.row(i)).unwrap();
            let (prev, l) = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, 0);
                if i > 0 && j > 0 && d[i - 1][j - 1] < best.0 {
                    best = (d[i - 1][j - 1], len[i - 1][j - 1]);
                }
                if i > 0 && d[i - 1][j] < best.0 {
                    best = (d[i - 1][j], len[i - 1][j]);
                }
                if j > 0 && d[i][j - 1] < best.0 {
                    best = (d[i][j - 1], len[i][j - 1]);
                }
                best
            };
            d[i][j] = c + prev;
            len[i][j] = l + 1;
        }
        let expected = out.last().map_or(0, |&p| p + 1);
        let score = |j: usize| d[i][j] / (len[i][j] as f64);
        let mut best = 0;
        for j in 1..m {
            let (s, b) = (score(j), score(best));
            if s < b || (s == b && j.abs_diff(expected) < best.abs_diff(expected)) {
                best = j;
            }
        }
        if monotonic {
            if let Some(&p) = out.last() {
                best = best.max(p);
            }
        }
        out.push(best);
    }
    out
}
