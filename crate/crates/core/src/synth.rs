//! Synthetic time warps with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::posteriogram::{to_probabilities, PhonemeVocab, Posteriogram, N_CLASSES};

/// Floor for noisy probabilities before renormalization.
const NOISE_FLOOR: f32 = 1e-6;

/// Piecewise-linear map from reference time to target time, plus the
/// standard deviation of the noise added to each target probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    /// `(reference_ms, target_ms)` knots, strictly increasing in both.
    pub breakpoints: Vec<(f64, f64)>,
    #[serde(default)]
    pub noise_level: f64,
}

impl WarpSpec {
    pub fn identity(duration_ms: f64) -> Self {
        WarpSpec {
            breakpoints: vec![(0.0, 0.0), (duration_ms, duration_ms)],
            noise_level: 0.0,
        }
    }

    /// Uniform tempo change: target time = `factor` · reference time.
    pub fn uniform(duration_ms: f64, factor: f64) -> Self {
        WarpSpec {
            breakpoints: vec![(0.0, 0.0), (duration_ms, duration_ms * factor)],
            noise_level: 0.0,
        }
    }

    /// Random tempo curve with `segments` pieces of slope in `slopes`.
    pub fn random(duration_ms: f64, segments: usize, slopes: (f64, f64), rng: &mut impl Rng) -> Self {
        let mut cuts: Vec<f64> = (1..segments).map(|_| rng.random_range(0.0..duration_ms)).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut knots = vec![0.0];
        knots.extend(cuts.into_iter().filter(|&c| c > 0.0 && c < duration_ms));
        knots.push(duration_ms);
        let mut breakpoints = vec![(0.0, 0.0)];
        let mut t = 0.0;
        for w in knots.windows(2) {
            t += (w[1] - w[0]) * rng.random_range(slopes.0..=slopes.1);
            breakpoints.push((w[1], t));
        }
        WarpSpec {
            breakpoints,
            noise_level: 0.0,
        }
    }

    pub fn with_noise(mut self, noise_level: f64) -> Self {
        self.noise_level = noise_level;
        self
    }

    pub fn validate(&self, reference_duration_ms: f64) -> Result<()> {
        let bp = &self.breakpoints;
        if bp.len() < 2 {
            return Err(Error::Spec("need at least two breakpoints".into()));
        }
        if bp.iter().any(|(r, t)| !r.is_finite() || !t.is_finite()) {
            return Err(Error::Spec("breakpoints must be finite".into()));
        }
        if let Some(w) = bp.windows(2).find(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) {
            return Err(Error::Spec(format!(
                "breakpoints {:?} -> {:?} are not strictly increasing",
                w[0], w[1]
            )));
        }
        if bp[0].0 != 0.0 || bp[0].1 < 0.0 {
            return Err(Error::Spec(format!(
                "warp must start at reference time 0, got {:?}",
                bp[0]
            )));
        }
        let end = bp[bp.len() - 1].0;
        if end < reference_duration_ms {
            return Err(Error::Spec(format!(
                "warp ends at {end} ms but the reference lasts {reference_duration_ms} ms"
            )));
        }
        if !(self.noise_level >= 0.0) || !self.noise_level.is_finite() {
            return Err(Error::Spec(format!("noise level {}", self.noise_level)));
        }
        Ok(())
    }

    fn interpolate(pairs: impl Iterator<Item = (f64, f64)> + Clone, x: f64) -> f64 {
        let pts: Vec<(f64, f64)> = pairs.collect();
        let i = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
        let (a, b) = (pts[i - 1], pts[i]);
        a.1 + (x - a.0) * (b.1 - a.1) / (b.0 - a.0)
    }

    /// Target time of a reference instant.
    pub fn forward(&self, reference_ms: f64) -> f64 {
        Self::interpolate(self.breakpoints.iter().copied(), reference_ms)
    }

    /// Reference time of a target instant.
    pub fn inverse(&self, target_ms: f64) -> f64 {
        Self::interpolate(self.breakpoints.iter().map(|&(r, t)| (t, r)), target_ms)
    }
}

/// Ground truth written next to a synthesized target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpTruth {
    pub breakpoints: Vec<(f64, f64)>,
    pub frame_period_ms: f64,
    pub reference_frames: usize,
    pub target_frames: usize,
    /// Reference frame each target frame was sampled from.
    pub source_frames: Vec<usize>,
}

impl WarpTruth {
    pub fn warp(&self) -> WarpSpec {
        WarpSpec {
            breakpoints: self.breakpoints.clone(),
            noise_level: 0.0,
        }
    }
}

/// Resamples `reference` along the warp and perturbs it with clipped noise.
///
/// Target frame `j` at time `j · period` copies the reference frame nearest
/// to the inverse-warped time.
pub fn synth_warp(reference: &Posteriogram, spec: &WarpSpec, seed: u64) -> Result<(Posteriogram, WarpTruth)> {
    let n_ref = reference.n_frames();
    if n_ref == 0 {
        return Err(Error::EmptyInput("reference posteriogram is empty".into()));
    }
    let period = reference.frame_period_ms();
    let duration = n_ref as f64 * period;
    spec.validate(duration)?;

    let end = spec.forward(duration);
    let n_target = ((end / period) - 1e-9).ceil().max(1.0) as usize;
    let source_frames: Vec<usize> = (0..n_target)
        .map(|j| {
            let r = spec.inverse(j as f64 * period).max(0.0) / period;
            ((r + 0.5).floor() as usize).min(n_ref - 1)
        })
        .collect();

    let target = if spec.noise_level == 0.0 {
        let data = Matrix::from_rows(N_CLASSES, source_frames.iter().map(|&i| reference.data().row(i)))?;
        Posteriogram::new(data, period, reference.vocab().clone())?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.noise_level).map_err(|e| Error::Spec(e.to_string()))?;
        let probs = to_probabilities(reference);
        let mut data = Matrix::zeros(n_target, N_CLASSES);
        for (j, &i) in source_frames.iter().enumerate() {
            let row = data.row_mut(j);
            for (o, &p) in row.iter_mut().zip(probs.row(i)) {
                *o = (p as f64 + noise.sample(&mut rng)).max(NOISE_FLOOR as f64) as f32;
            }
        }
        Posteriogram::from_probabilities(&data, period, reference.vocab().clone())?
    };

    let truth = WarpTruth {
        breakpoints: spec.breakpoints.clone(),
        frame_period_ms: period,
        reference_frames: n_ref,
        target_frames: n_target,
        source_frames,
    };
    Ok((target, truth))
}

/// A posteriogram that looks like sung phonemes: runs of 2 to 12 frames
/// dominated by one class, with blank runs interleaved.
pub fn synthetic_reference(n_frames: usize, seed: u64) -> Result<Posteriogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = PhonemeVocab::default();
    let blank = vocab.blank_index();
    let mut data = Matrix::zeros(n_frames, N_CLASSES);
    let mut t = 0;
    let mut prev = usize::MAX;
    while t < n_frames {
        let class = if prev != blank && rng.random_bool(0.15) {
            blank
        } else {
            loop {
                let c = rng.random_range(0..blank);
                if c != prev {
                    break c;
                }
            }
        };
        prev = class;
        let run = rng.random_range(2..=12).min(n_frames - t);
        let peak: f64 = rng.random_range(0.55..0.9);
        let mut background: Vec<f64> = (0..N_CLASSES).map(|_| rng.random_range(0.05..1.0)).collect();
        background[class] = 0.0;
        let bsum: f64 = background.iter().sum();
        for k in 0..run {
            // Confidence swells toward the middle of each run.
            let x = (k as f64 + 0.5) / run as f64;
            let p = peak * (0.85 + 0.15 * (std::f64::consts::PI * x).sin());
            let row = data.row_mut(t + k);
            for (c, o) in row.iter_mut().enumerate() {
                let v = if c == class {
                    p
                } else {
                    (1.0 - p) * background[c] / bsum
                };
                *o = v as f32;
            }
        }
        t += run;
    }
    Posteriogram::from_probabilities(&data, 40.0, vocab)
}
