//! Seeded additive speckle noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::frame::{Frame, FrameKind};

use super::PreprocessError;

/// Noise amplitude and seed for one augmentation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    speckle_alpha: f64,
    pub rng_seed: u64,
}

impl AugmentParams {
    pub fn new(speckle_alpha: f64, rng_seed: u64) -> Result<Self, PreprocessError> {
        if !(speckle_alpha.is_finite() && speckle_alpha >= 0.0) {
            return Err(PreprocessError::NegativeAlpha(speckle_alpha));
        }
        Ok(Self {
            speckle_alpha,
            rng_seed,
        })
    }

    /// Default amplitude: 2% of the brightest pixel.
    pub fn relative_to(frame: &Frame, rng_seed: u64) -> Self {
        let (_, hi) = frame.min_max();
        Self {
            speckle_alpha: 0.02 * hi.max(0.0),
            rng_seed,
        }
    }

    pub fn speckle_alpha(&self) -> f64 {
        self.speckle_alpha
    }
}

/// Deterministic generator for one frame of a seeded stream.
///
/// Each frame index selects an independent ChaCha stream, so frames can be
/// processed in any order or in parallel with identical results.
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// `I + alpha * N` per pixel with `N` standard normal; raw frames clamp at zero.
pub fn add_speckle(frame: &Frame, params: &AugmentParams, frame_index: u64) -> Frame {
    if params.speckle_alpha == 0.0 {
        return frame.clone();
    }
    let mut rng = frame_rng(params.rng_seed, frame_index);
    let nonneg = frame.kind().is_nonnegative();
    let data = frame
        .data()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            let out = v + params.speckle_alpha * n;
            if nonneg {
                out.max(0.0)
            } else {
                out
            }
        })
        .collect();
    let kind = frame.kind();
    frame
        .with_data(data, kind)
        .expect("clamped speckle keeps the frame valid")
}

/// Speckle for a raw camera frame; rejects other kinds.
pub fn add_speckle_raw(
    frame: &Frame,
    params: &AugmentParams,
    frame_index: u64,
) -> Result<Frame, PreprocessError> {
    if frame.kind() != FrameKind::RawCamera {
        return Err(PreprocessError::WrongKind(frame.kind()));
    }
    Ok(add_speckle(frame, params, frame_index))
}
