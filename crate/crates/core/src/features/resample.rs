//! Rational-ratio polyphase resampling with a Hann-windowed sinc kernel.

use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Kernel half-width in zero crossings of the anti-aliasing sinc.
const ZERO_CROSSINGS: usize = 16;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Resamples to `target_rate_hz`. Output length is `round(N · target / source)`.
///
/// Each of the `L` phases (for an up/down ratio `L/M` in lowest terms) is a
/// symmetric FIR normalized to unit DC gain; the signal is extended by edge
/// replication so constants pass through unchanged.
pub fn resample(audio: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer> {
    if target_rate_hz == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    let source = audio.sample_rate_hz() as u64;
    let target = target_rate_hz as u64;
    if source == target {
        return Ok(audio.clone());
    }
    let g = gcd(source, target);
    let up = target / g;
    let down = source / g;

    let x = audio.samples();
    let n = x.len() as u64;
    let out_len = ((2 * n * target + source) / (2 * source)) as usize;
    if x.is_empty() {
        return AudioBuffer::new(Vec::new(), target_rate_hz);
    }

    // Cutoff in cycles per input sample.
    let cutoff = 0.5 * (target as f64 / source as f64).min(1.0);
    let half = (ZERO_CROSSINGS as f64 / (2.0 * cutoff)).ceil() as i64;
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps: Vec<f64> = (-half + 1..=half)
                .map(|k| {
                    let d = k as f64 - frac;
                    let arg = 2.0 * cutoff * d;
                    let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                    let w = (d / (half as f64 + 1.0)).clamp(-1.0, 1.0);
                    let window = 0.5 + 0.5 * (PI * w).cos();
                    sinc * window
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect();

    let last = x.len() as i64 - 1;
    let samples = (0..out_len as u64)
        .map(|i| {
            let pos = i * down;
            let base = (pos / up) as i64;
            let taps = &phases[(pos % up) as usize];
            taps.iter()
                .enumerate()
                .map(|(j, t)| {
                    let idx = (base - half + 1 + j as i64).clamp(0, last);
                    t * x[idx as usize]
                })
                .sum()
        })
        .collect();
    AudioBuffer::new(samples, target_rate_hz)
}
