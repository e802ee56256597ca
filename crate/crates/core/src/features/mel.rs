//! HTK-style triangular mel filterbank.

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_bands` triangles evenly spaced on the mel axis from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_bins: usize,
    /// Per band: first bin index and the weights starting there.
    bands: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    /// `n_bins` spectrum bins spanning 0..=Nyquist (an `n_fft/2 + 1` grid).
    pub fn new(n_bands: usize, n_bins: usize, sample_rate_hz: f64) -> Self {
        let nyquist = sample_rate_hz / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64))
            .collect();
        let bin_hz = |k: usize| {
            if n_bins > 1 {
                nyquist * k as f64 / (n_bins - 1) as f64
            } else {
                0.0
            }
        };
        let bands = edges
            .windows(3)
            .map(|e| {
                let (lo, mid, hi) = (e[0], e[1], e[2]);
                let mut first = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = bin_hz(k);
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(k);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        MelFilterbank { n_bins, bands }
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        debug_assert_eq!(spectrum.len(), self.n_bins);
        self.bands
            .iter()
            .map(|(start, w)| w.iter().zip(&spectrum[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}
