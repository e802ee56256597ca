//! Linear prediction by the Levinson-Durbin recursion.

use crate::error::{Error, Result};

/// Predictor `x[n] ≈ Σ a_k x[n-k]` plus the residual energy of that fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Lpc {
    pub coefficients: Vec<f64>,
    pub prediction_error: f64,
}

/// Biased autocorrelation `r_k = Σ x[n] x[n+k]` for lags `0..=max_lag`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= frame.len() {
                0.0
            } else {
                frame[..frame.len() - k]
                    .iter()
                    .zip(&frame[k..])
                    .map(|(a, b)| a * b)
                    .sum()
            }
        })
        .collect()
}

/// Solves the Toeplitz normal equations for an order-`order` predictor.
///
/// A zero-energy frame (`r_0 == 0`) yields all-zero coefficients and zero
/// error. If the residual energy reaches zero before `order` steps the signal
/// is perfectly predictable; the remaining coefficients stay zero.
pub fn levinson_durbin(autocorrelation: &[f64], order: usize) -> Result<Lpc> {
    if autocorrelation.len() < order + 1 {
        return Err(Error::Config(format!(
            "LPC order {order} needs {} autocorrelation lags, got {}",
            order + 1,
            autocorrelation.len()
        )));
    }
    let r = autocorrelation;
    if !r[0].is_finite() || r[0] < 0.0 {
        return Err(Error::Config(format!(
            "autocorrelation r[0] must be finite and non-negative, got {}",
            r[0]
        )));
    }
    let mut a = vec![0.0; order];
    if r[0] == 0.0 {
        return Ok(Lpc {
            coefficients: a,
            prediction_error: 0.0,
        });
    }

    let mut err = r[0];
    let mut prev = vec![0.0; order];
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            err = 0.0;
            break;
        }
    }

    Ok(Lpc {
        coefficients: a,
        prediction_error: err,
    })
}

/// Evaluates the all-pole power envelope `g² / |1 - Σ a_k e^{-iωk}|²` at `omega`.
pub fn envelope_at(lpc: &Lpc, omega: f64) -> f64 {
    let (mut re, mut im) = (1.0, 0.0);
    for (k, a) in lpc.coefficients.iter().enumerate() {
        let phase = omega * (k + 1) as f64;
        re -= a * phase.cos();
        im += a * phase.sin();
    }
    let denom = re * re + im * im;
    if denom == 0.0 {
        return 0.0;
    }
    lpc.prediction_error / denom
}
