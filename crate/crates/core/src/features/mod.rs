//! Audio front end: framing, MFCC variants, LPC-derived cepstra, resampling
//! and the FEAT1 feature file.

mod dct;
mod lpc;
mod mel;
mod resample;
mod wav;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use dct::{dct_ii, dct_ii_matrix, dct_iii};
pub use lpc::{autocorrelation, envelope_at, levinson_durbin, Lpc};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use wav::{read_wav, write_wav};

/// Floor applied to filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Grid size on which the all-pole envelope is sampled for the recitative
/// feature. The 32-point frame FFT at 1500 Hz leaves most of 25 mel bands
/// without a single bin.
pub const ENVELOPE_FFT_SIZE: usize = 512;

/// Mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Audio(format!("non-finite sample at index {i}")));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// 80 MFCCs at 16 kHz, the acoustic model input.
    Model80,
    /// 120 MFCCs with the first 20 discarded, at 44.1 kHz.
    Baseline,
    /// 25 cepstra of the LPC envelope at 1500 Hz.
    Recitative,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model80" => Ok(Variant::Model80),
            "baseline" => Ok(Variant::Baseline),
            "recitative" => Ok(Variant::Recitative),
            other => Err(Error::Config(format!(
                "unknown feature variant {other:?} (expected model80, baseline or recitative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub variant: Variant,
    pub sample_rate_hz: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mel_bands: usize,
    pub n_coeffs: usize,
    pub drop_first: usize,
    pub lpc_order: Option<usize>,
}

impl FeatureConfig {
    pub fn model80() -> Self {
        FeatureConfig {
            variant: Variant::Model80,
            sample_rate_hz: 16000,
            window_ms: 20.0,
            hop_ms: 10.0,
            n_mel_bands: 80,
            n_coeffs: 80,
            drop_first: 0,
            lpc_order: None,
        }
    }

    pub fn baseline() -> Self {
        FeatureConfig {
            variant: Variant::Baseline,
            sample_rate_hz: 44100,
            window_ms: 20.0,
            hop_ms: 10.0,
            n_mel_bands: 120,
            n_coeffs: 120,
            drop_first: 20,
            lpc_order: None,
        }
    }

    pub fn recitative() -> Self {
        FeatureConfig {
            variant: Variant::Recitative,
            sample_rate_hz: 1500,
            window_ms: 20.0,
            hop_ms: 10.0,
            n_mel_bands: 25,
            n_coeffs: 25,
            drop_first: 0,
            lpc_order: Some(12),
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Model80 => Self::model80(),
            Variant::Baseline => Self::baseline(),
            Variant::Recitative => Self::recitative(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.hop_ms > 0.0) || self.window_ms < self.hop_ms {
            return bad(format!(
                "need window_ms >= hop_ms > 0, got window {} hop {}",
                self.window_ms, self.hop_ms
            ));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mel_bands {
            return bad(format!(
                "need 0 < n_coeffs <= n_mel_bands, got {} and {}",
                self.n_coeffs, self.n_mel_bands
            ));
        }
        match self.variant {
            Variant::Baseline if self.drop_first >= self.n_coeffs => {
                return bad(format!(
                    "drop_first {} must be below n_coeffs {}",
                    self.drop_first, self.n_coeffs
                ))
            }
            Variant::Model80 | Variant::Recitative if self.drop_first != 0 => {
                return bad("drop_first is only meaningful for the baseline variant".into())
            }
            Variant::Recitative if self.lpc_order.is_none() => {
                return bad("recitative variant needs an LPC order".into())
            }
            _ => {}
        }
        let w = self.window_samples();
        let h = self.hop_samples();
        if w == 0 || h == 0 {
            return bad(format!(
                "window of {} ms or hop of {} ms rounds to zero samples at {} Hz",
                self.window_ms, self.hop_ms, self.sample_rate_hz
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        ms_to_samples(self.window_ms, self.sample_rate_hz)
    }

    pub fn hop_samples(&self) -> usize {
        ms_to_samples(self.hop_ms, self.sample_rate_hz)
    }

    pub fn output_dim(&self) -> usize {
        self.n_coeffs - self.drop_first
    }
}

fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0).round() as usize
}

/// `T x D` features with their time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Matrix,
    pub frame_period_ms: f64,
    pub first_frame_center_ms: f64,
}

const FEAT_MAGIC: &[u8] = b"FEAT1";

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(FEAT_MAGIC);
        w.u32(self.data.rows() as u32);
        w.u32(self.data.cols() as u32);
        w.f64(self.frame_period_ms);
        w.f64(self.first_frame_center_ms);
        w.f32s(self.data.as_slice());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FEAT_MAGIC)?;
        let t = r.u32("FEAT1 frame count")? as usize;
        let d = r.u32("FEAT1 dimension")? as usize;
        let frame_period_ms = r.f64("FEAT1 frame period")?;
        let first_frame_center_ms = r.f64("FEAT1 first frame center")?;
        let values = r.f32s(t * d, "FEAT1 payload")?;
        r.finish("FEAT1")?;
        Ok(FeatureMatrix {
            data: Matrix::from_vec(t, d, values)?,
            frame_period_ms,
            first_frame_center_ms,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of complete frames; partial trailing windows are dropped.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window {
        0
    } else {
        (n_samples - window) / hop + 1
    }
}

/// Cuts `audio` into Hann-windowed frames; frame `k` starts at sample `k · hop`.
pub fn frame_signal(audio: &AudioBuffer, window_ms: f64, hop_ms: f64) -> Result<Vec<Vec<f64>>> {
    let w = ms_to_samples(window_ms, audio.sample_rate_hz());
    let h = ms_to_samples(hop_ms, audio.sample_rate_hz());
    if w == 0 || h == 0 || w < h {
        return Err(Error::Config(format!(
            "window {window_ms} ms / hop {hop_ms} ms is not a valid framing at {} Hz",
            audio.sample_rate_hz()
        )));
    }
    frames_of(audio.samples(), w, h)
}

fn frames_of(x: &[f64], w: usize, h: usize) -> Result<Vec<Vec<f64>>> {
    if x.len() < w {
        return Err(Error::EmptyInput(format!(
            "{} samples is shorter than one {w}-sample window",
            x.len()
        )));
    }
    let win = hann(w);
    Ok((0..frame_count(x.len(), w, h))
        .map(|k| x[k * h..k * h + w].iter().zip(&win).map(|(s, g)| s * g).collect())
        .collect())
}

/// Shared spectral stage: mel projection, log floor and truncated DCT.
struct Cepstrum {
    filterbank: MelFilterbank,
    dct: Vec<f64>,
    n_coeffs: usize,
    drop_first: usize,
}

impl Cepstrum {
    fn new(config: &FeatureConfig, n_bins: usize) -> Self {
        Cepstrum {
            filterbank: MelFilterbank::new(config.n_mel_bands, n_bins, config.sample_rate_hz as f64),
            dct: dct_ii_matrix(config.n_mel_bands, config.n_coeffs),
            n_coeffs: config.n_coeffs,
            drop_first: config.drop_first,
        }
    }

    fn row(&self, power: &[f64], out: &mut [f32]) {
        let logmel: Vec<f64> = self
            .filterbank
            .apply(power)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        let c = dct::apply(&self.dct, &logmel, self.n_coeffs);
        for (o, v) in out.iter_mut().zip(&c[self.drop_first..]) {
            *o = *v as f32;
        }
    }
}

fn check_rate(audio: &AudioBuffer, config: &FeatureConfig) -> Result<()> {
    config.validate()?;
    if audio.sample_rate_hz() != config.sample_rate_hz {
        return Err(Error::RateMismatch {
            audio_hz: audio.sample_rate_hz(),
            config_hz: config.sample_rate_hz,
        });
    }
    Ok(())
}

fn feature_matrix(config: &FeatureConfig, data: Matrix) -> FeatureMatrix {
    let sr = config.sample_rate_hz as f64;
    FeatureMatrix {
        data,
        frame_period_ms: config.hop_samples() as f64 * 1000.0 / sr,
        first_frame_center_ms: config.window_samples() as f64 * 500.0 / sr,
    }
}

fn power_spectrum(fft: &Arc<dyn Fft<f64>>, frame: &[f64], buf: &mut Vec<Complex64>) -> Vec<f64> {
    let n = fft.len();
    buf.clear();
    buf.extend(frame.iter().map(|&s| Complex64::new(s, 0.0)));
    buf.resize(n, Complex64::new(0.0, 0.0));
    fft.process(buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Mel-frequency cepstral coefficients (`model80` and `baseline` variants).
pub fn mfcc(audio: &AudioBuffer, config: &FeatureConfig) -> Result<FeatureMatrix> {
    check_rate(audio, config)?;
    if config.variant == Variant::Recitative {
        return Err(Error::Config(
            "the recitative variant is computed by recitative_feature".into(),
        ));
    }
    let frames = frames_of(audio.samples(), config.window_samples(), config.hop_samples())?;
    let n_fft = config.window_samples().next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let cep = Cepstrum::new(config, n_fft / 2 + 1);

    let mut data = Matrix::zeros(frames.len(), config.output_dim());
    let mut buf = Vec::with_capacity(n_fft);
    for (i, frame) in frames.iter().enumerate() {
        let power = power_spectrum(&fft, frame, &mut buf);
        cep.row(&power, data.row_mut(i));
    }
    Ok(feature_matrix(config, data))
}

/// Cepstra of the LPC spectral envelope, computed at 1500 Hz.
pub fn recitative_feature(audio: &AudioBuffer, config: &FeatureConfig) -> Result<FeatureMatrix> {
    check_rate(audio, config)?;
    let order = config
        .lpc_order
        .ok_or_else(|| Error::Config("recitative feature needs an LPC order".into()))?;
    let frames = frames_of(audio.samples(), config.window_samples(), config.hop_samples())?;
    let n_bins = ENVELOPE_FFT_SIZE / 2 + 1;
    let cep = Cepstrum::new(config, n_bins);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(ENVELOPE_FFT_SIZE);

    let mut data = Matrix::zeros(frames.len(), config.output_dim());
    let mut buf = Vec::with_capacity(ENVELOPE_FFT_SIZE);
    for (i, frame) in frames.iter().enumerate() {
        let r = autocorrelation(frame, order);
        let lpc = levinson_durbin(&r, order)?;
        // |A(e^{iω})|² on the grid, from the FFT of (1, -a_1, ..., -a_p).
        let mut poly = Vec::with_capacity(order + 1);
        poly.push(1.0);
        poly.extend(lpc.coefficients.iter().map(|a| -a));
        let denom = power_spectrum(&fft, &poly, &mut buf);
        let envelope: Vec<f64> = denom
            .iter()
            .map(|&d| if d > 0.0 { lpc.prediction_error / d } else { 0.0 })
            .collect();
        cep.row(&envelope, data.row_mut(i));
    }
    Ok(feature_matrix(config, data))
}

/// Dispatches on the configured variant.
pub fn extract(audio: &AudioBuffer, config: &FeatureConfig) -> Result<FeatureMatrix> {
    match config.variant {
        Variant::Recitative => recitative_feature(audio, config),
        _ => mfcc(audio, config),
    }
}
