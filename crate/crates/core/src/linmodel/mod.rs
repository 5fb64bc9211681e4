//! The linear activation map: `Z_E = sum_ij w_ij I_ij + b`.

mod io;
mod train;

use thiserror::Error;

use crate::frame::Frame;
use crate::preprocess::Preprocessing;

pub use train::{default_lambda, train, train_frames, RidgeProblem, TrainOptions, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("frame is {got:?}, model expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("need at least 2 samples, got {0}")]
    InsufficientData(usize),
    #[error("ridge strength must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("label count {labels} does not match frame count {frames}")]
    LabelCount { frames: usize, labels: usize },
    #[error("non-finite weight at index {0}")]
    NonFiniteWeight(usize),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("model dimensions {0}x{1} are too large")]
    DimensionOverflow(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-pixel weights plus intercept, tagged with the preprocessing they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
    bias: f64,
    preprocessing: Preprocessing,
    ridge_lambda: f64,
}

impl LinearMap {
    pub fn new(
        width: usize,
        height: usize,
        weights: Vec<f64>,
        bias: f64,
        preprocessing: Preprocessing,
        ridge_lambda: f64,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 || width.checked_mul(height).is_none() {
            return Err(ModelError::DimensionOverflow(width, height));
        }
        if weights.len() != width * height {
            return Err(ModelError::Malformed(format!(
                "{} weights for a {width}x{height} map",
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(ModelError::NonFiniteWeight(i));
        }
        if !bias.is_finite() {
            return Err(ModelError::Malformed("non-finite bias".into()));
        }
        if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
            return Err(ModelError::InvalidLambda(ridge_lambda));
        }
        Ok(Self {
            width,
            height,
            weights,
            bias,
            preprocessing,
            ridge_lambda,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.width + col]
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    /// Inferred emission height for an already-preprocessed frame.
    pub fn infer(&self, frame: &Frame) -> Result<f64, ModelError> {
        if frame.dims() != self.dims() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dims(),
                got: frame.dims(),
            });
        }
        Ok(dot(&self.weights, frame.data()) + self.bias)
    }
}

/// Dot product in a fixed order: eight interleaved lanes, reduced pairwise,
/// then the tail.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}
