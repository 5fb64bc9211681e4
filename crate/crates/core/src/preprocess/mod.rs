//! Normalization and augmentation applied to frames before training and
//! inference.
//!
//! Three model variants exist:
//!
//! | tag    | training frames                    | real-time frames |
//! |--------|------------------------------------|------------------|
//! | `base` | as captured                        | as captured      |
//! | `hist` | matched to the real-time histogram | as captured      |
//! | `norm` | matched (if a reference is given), then standardized | standardized |

mod histogram;
mod noise;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::frame::{Frame, FrameError, FrameKind};

pub use histogram::{build_histogram, histogram_match, IntensityHistogram, BIN_COUNT};
pub use noise::{add_speckle, add_speckle_raw, frame_rng, AugmentParams};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no frames supplied")]
    EmptyInput,
    #[error("frame contains non-finite intensities")]
    NonFinite,
    #[error("frame is constant (max = min)")]
    DegenerateFrame,
    #[error("frame has zero variance")]
    ZeroVariance,
    #[error("speckle amplitude must be finite and >= 0, got {0}")]
    NegativeAlpha(f64),
    #[error("operation not defined for {0} frames")]
    WrongKind(FrameKind),
    #[error("`hist` preprocessing needs a reference histogram")]
    MissingReference,
    #[error("unknown preprocessing tag `{0}`")]
    UnknownTag(String),
    #[error("malformed histogram: {0}")]
    Malformed(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which preprocessing a linear map's weights expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preprocessing {
    Base,
    Hist,
    Norm,
}

impl Preprocessing {
    pub fn as_str(self) -> &'static str {
        match self {
            Preprocessing::Base => "base",
            Preprocessing::Hist => "hist",
            Preprocessing::Norm => "norm",
        }
    }
}

impl fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preprocessing {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Preprocessing::Base),
            "hist" => Ok(Preprocessing::Hist),
            "norm" => Ok(Preprocessing::Norm),
            other => Err(PreprocessError::UnknownTag(other.to_string())),
        }
    }
}

/// Per-frame mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Zero-mean, unit-variance copy of the frame (population convention).
pub fn standardize(frame: &Frame) -> Result<Frame, PreprocessError> {
    let (mean, std) = mean_std(frame.data());
    if !std.is_finite() {
        return Err(PreprocessError::NonFinite);
    }
    if std == 0.0 {
        return Err(PreprocessError::ZeroVariance);
    }
    let data = frame.data().iter().map(|v| (v - mean) / std).collect();
    Ok(frame.with_data(data, FrameKind::Standardized)?)
}

/// Preprocessing applied to a training frame for the given variant.
pub fn prepare_training(
    frame: &Frame,
    tag: Preprocessing,
    reference: Option<&IntensityHistogram>,
) -> Result<Frame, PreprocessError> {
    match tag {
        Preprocessing::Base => Ok(frame.clone()),
        Preprocessing::Hist => {
            let reference = reference.ok_or(PreprocessError::MissingReference)?;
            histogram_match(frame, reference)
        }
        Preprocessing::Norm => match reference {
            Some(r) => standardize(&histogram_match(frame, r)?),
            None => standardize(frame),
        },
    }
}

/// Preprocessing applied to a live camera frame before inference.
pub fn prepare_realtime(frame: &Frame, tag: Preprocessing) -> Result<Frame, PreprocessError> {
    match tag {
        Preprocessing::Base | Preprocessing::Hist => Ok(frame.clone()),
        Preprocessing::Norm => standardize(frame),
    }
}
