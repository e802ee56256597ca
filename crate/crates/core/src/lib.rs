//! Real-time lyrics tracking.
//!
//! Audio becomes a phoneme posteriogram through a fixed-latency
//! convolutional acoustic model; the live posteriogram is then aligned
//! against a posteriogram precomputed from a reference performance with
//! online time warping, so lyric annotations made on the reference can be
//! displayed at the right moment of the live one.
//!
//! ```text
//! audio -> features -> net (streaming) -> posteriogram -> strip blanks -> tracker -> events -> eval
//! ```

pub mod error;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod net;
pub mod posteriogram;
pub mod replay;
pub mod synth;
pub mod tracker;

mod binio;

pub use error::{Error, Result};
pub use matrix::Matrix;
