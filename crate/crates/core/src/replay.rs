//! Offline replays of a live session, frame by frame.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::net::{Network, StreamRow, StreamingInference};
use crate::posteriogram::{strip_blanks, BlankStripper, Posteriogram};
use crate::tracker::{AlignmentEvent, TrackerConfig, TrackerState, TrackingReference};

/// Strips blanks from a reference posteriogram and caches its norms.
pub fn prepare_reference(reference: &Posteriogram) -> Result<Arc<TrackingReference>> {
    TrackingReference::new(strip_blanks(reference)).map(Arc::new)
}

/// Feeds frames to a tracker while auditing that it never looks ahead.
struct LiveTracker {
    state: TrackerState,
    stripper: BlankStripper,
    events: Vec<AlignmentEvent>,
}

impl LiveTracker {
    fn new(reference: Arc<TrackingReference>, config: TrackerConfig) -> Result<Self> {
        let blank = reference.stripped().vocab.blank_index();
        Ok(LiveTracker {
            state: TrackerState::new(reference, config)?,
            stripper: BlankStripper::new(blank),
            events: Vec::new(),
        })
    }

    /// `probs` is the next target row as probabilities.
    fn feed(&mut self, probs: &[f32]) -> Result<()> {
        let available = self.stripper.frames_seen() + 1;
        let Some(index) = self.stripper.push(probs) else {
            return Ok(());
        };
        let event = self.state.step(probs, index)?;
        if let Some(touched) = self.state.max_target_index_touched().filter(|&t| t >= available) {
            return Err(Error::Causality { touched, available });
        }
        self.events.push(event);
        Ok(())
    }
}

fn exp_row(log_probs: &[f32]) -> Vec<f32> {
    log_probs.iter().map(|v| v.exp()).collect()
}

/// Tracks a complete target posteriogram as if it arrived one row at a time.
pub fn replay_posteriogram(
    reference: Arc<TrackingReference>,
    target: &Posteriogram,
    config: TrackerConfig,
) -> Result<Vec<AlignmentEvent>> {
    let config = TrackerConfig {
        target_frame_period_ms: config.target_frame_period_ms.or(Some(target.frame_period_ms())),
        ..config
    };
    let mut live = LiveTracker::new(reference, config)?;
    for row in target.data().iter_rows() {
        live.feed(&exp_row(row))?;
    }
    Ok(live.events)
}

/// Runs features through the streaming network and the tracker. With
/// `pipelined`, inference and tracking run on separate threads; the output is
/// identical either way.
pub fn replay_features(
    net: Arc<Network>,
    latency_frames: usize,
    features: &FeatureMatrix,
    reference: Arc<TrackingReference>,
    config: TrackerConfig,
    pipelined: bool,
) -> Result<Vec<AlignmentEvent>> {
    let config = TrackerConfig {
        target_frame_period_ms: config.target_frame_period_ms.or(Some(net.spec().output_period_ms())),
        ..config
    };
    let mut live = LiveTracker::new(reference, config)?;
    if !pipelined {
        let mut stream = StreamingInference::new(net, latency_frames);
        for frame in features.data.iter_rows() {
            if let Some(row) = stream.push(frame)? {
                live.feed(&exp_row(&row.log_probs))?;
            }
        }
        for row in stream.finish() {
            live.feed(&exp_row(&row.log_probs))?;
        }
        return Ok(live.events);
    }

    let (tx, rx) = mpsc::sync_channel::<StreamRow>(64);
    let frames = features.data.clone();
    let producer = thread::spawn(move || -> Result<()> {
        let mut stream = StreamingInference::new(net, latency_frames);
        for frame in frames.iter_rows() {
            if let Some(row) = stream.push(frame)? {
                if tx.send(row).is_err() {
                    return Ok(());
                }
            }
        }
        for row in stream.finish() {
            if tx.send(row).is_err() {
                break;
            }
        }
        Ok(())
    });
    let mut tracked = Ok(());
    for row in rx {
        tracked = live.feed(&exp_row(&row.log_probs));
        if tracked.is_err() {
            break;
        }
    }
    let produced = producer.join().expect("inference thread panicked");
    produced?;
    tracked?;
    Ok(live.events)
}
