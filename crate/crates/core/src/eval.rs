//! Lyric anchors, their transfer to live time, and score-following metrics.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::AlignmentEvent;

/// Errors at or below this bound count as correct detections.
pub const THRESHOLD_MS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub time_ms: f64,
    pub label: String,
}

/// Parses `time_ms,label` CSV with a header row; times must be ascending.
pub fn parse_annotations(input: impl Read) -> Result<Vec<Annotation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let mut out: Vec<Annotation> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Parse { line, message };
        if record.len() != 2 {
            return Err(err(format!("expected 2 fields, got {}", record.len())));
        }
        let time_ms: f64 = record[0]
            .trim()
            .parse()
            .map_err(|e| err(format!("time {:?}: {e}", &record[0])))?;
        if !time_ms.is_finite() || time_ms < 0.0 {
            return Err(err(format!("time {time_ms} must be finite and non-negative")));
        }
        if let Some(prev) = out.last() {
            if time_ms < prev.time_ms {
                return Err(err(format!(
                    "time {time_ms} precedes the previous annotation at {}",
                    prev.time_ms
                )));
            }
        }
        out.push(Annotation {
            time_ms,
            label: record[1].to_string(),
        });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_annotations(file)
}

pub fn write_annotations(out: impl std::io::Write, annotations: &[Annotation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["time_ms", "label"]).map_err(to_err)?;
    for a in annotations {
        w.write_record([a.time_ms.to_string(), a.label.clone()])
            .map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Target-side time of a transferred anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub time_ms: f64,
    /// The anchor lies beyond the last reported reference time.
    pub extrapolated: bool,
}

/// Maps reference anchors to target time through the event stream.
///
/// Each anchor is detected at the first event whose reference time reaches
/// it, interpolating linearly from the preceding event.
pub fn transfer(annotations: &[Annotation], events: &[AlignmentEvent]) -> Result<Vec<Detection>> {
    let last = events.last().ok_or(Error::EmptyAlignment)?;
    if events.windows(2).any(|w| w[0].target_index > w[1].target_index) {
        return Err(Error::Config("events must be sorted by target index".into()));
    }
    Ok(annotations
        .iter()
        .map(|a| {
            let Some(i) = events.iter().position(|e| e.reference_time_ms >= a.time_ms) else {
                return Detection {
                    time_ms: last.target_time_ms,
                    extrapolated: true,
                };
            };
            let hit = &events[i];
            let time_ms = match i.checked_sub(1).map(|p| &events[p]) {
                Some(prev) => {
                    // prev.reference_time_ms < a.time_ms <= hit.reference_time_ms
                    let frac = (a.time_ms - prev.reference_time_ms) / (hit.reference_time_ms - prev.reference_time_ms);
                    prev.target_time_ms + frac * (hit.target_time_ms - prev.target_time_ms)
                }
                None => hit.target_time_ms,
            };
            Detection {
                time_ms,
                extrapolated: false,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "mean_ms")]
    pub mean_error_ms: f64,
    #[serde(rename = "pct_le_1s")]
    pub pct_within_1s: f64,
    #[serde(rename = "n")]
    pub count: usize,
    /// Signed, `detected − truth`.
    pub errors_ms: Vec<f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Mean absolute error and the share of detections within one second.
pub fn metrics(detected: &[f64], truth: &[f64]) -> Result<MetricsReport> {
    if detected.len() != truth.len() {
        return Err(Error::Count {
            detected: detected.len(),
            truth: truth.len(),
        });
    }
    let errors_ms: Vec<f64> = detected.iter().zip(truth).map(|(d, t)| d - t).collect();
    let n = errors_ms.len();
    if n == 0 {
        return Ok(MetricsReport {
            mean_error_ms: 0.0,
            pct_within_1s: 100.0,
            count: 0,
            errors_ms,
        });
    }
    let mean = errors_ms.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
    let within = errors_ms.iter().filter(|e| e.abs() <= THRESHOLD_MS).count();
    Ok(MetricsReport {
        mean_error_ms: mean,
        pct_within_1s: 100.0 * within as f64 / n as f64,
        count: n,
        errors_ms,
    })
}
