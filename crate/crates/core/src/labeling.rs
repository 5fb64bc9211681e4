//! Ground-truth emission height from inverted-emissivity frames.
//!
//! Only columns at or outboard of the X-point column contribute. For each
//! row `i` the outboard row sum `S_i` is formed, and a weighted row index is
//! reduced from the `S_i`. The default [`RowWeighting::SquaredSums`] takes
//! `sqrt(sum_i (i S_i)^2 / sum_i S_i^2)`; the other weightings exist for
//! sensitivity studies.

use rayon::prelude::*;
use thiserror::Error;

use crate::frame::{Frame, FrameKind};
use crate::geometry::{GeometryState, PixelCalibration};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("no emission at or outboard of the X-point column {j_x}")]
    AllZeroOutboard { j_x: i64 },
    #[error("X-point column {j_x} lies outside the frame (width {width})")]
    XPointOffFrame { j_x: i64, width: usize },
    #[error("expected an inverted_emissivity frame, got {0}")]
    WrongKind(FrameKind),
    #[error("frame {index}: dimensions {got:?} differ from {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("frame {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<LabelError>,
    },
}

/// How row sums are reduced to a single row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowWeighting {
    /// `sqrt(sum (i S_i)^2 / sum S_i^2)`.
    #[default]
    SquaredSums,
    /// Root-mean-square row weighted by `S_i`: `sqrt(sum i^2 S_i / sum S_i)`.
    LinearRms,
    /// Centroid row weighted by `S_i`: `sum i S_i / sum S_i`.
    Centroid,
}

/// Training pair: camera frame plus its emission-height label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub frame: Frame,
    pub z_e_label: f64,
    pub geometry: GeometryState,
}

impl LabeledSample {
    /// Label lies between the strike point and half a leg above the X-point.
    pub fn is_plausible(&self) -> bool {
        let g = &self.geometry;
        let upper = g.z_x + 0.5 * (g.z_x - g.z_s);
        (g.z_s..=upper).contains(&self.z_e_label)
    }
}

/// One campaign entry: the inverted render used for labeling and the camera
/// view of the same plant state.
#[derive(Debug, Clone)]
pub struct CampaignFrame {
    pub inverted: Frame,
    pub camera: Frame,
    pub geometry: GeometryState,
}

/// Column index of the X-point radius, rounding half-way cases outboard.
pub fn xpoint_column(cal: &PixelCalibration, geom: &GeometryState) -> i64 {
    (cal.col_of(geom.r_x) + 0.5).floor() as i64
}

fn outboard_start(
    frame: &Frame,
    cal: &PixelCalibration,
    geom: &GeometryState,
) -> Result<usize, LabelError> {
    let j_x = xpoint_column(cal, geom);
    if j_x < 0 || j_x >= frame.width() as i64 {
        return Err(LabelError::XPointOffFrame {
            j_x,
            width: frame.width(),
        });
    }
    Ok(j_x as usize)
}

/// Outboard row sums `S_i = sum_{j >= j_x} I_ij`.
pub fn outboard_row_sums(frame: &Frame, j_x: usize) -> Vec<f64> {
    frame.rows().map(|row| row[j_x..].iter().sum()).collect()
}

/// Reduces row sums to a fractional row index.
pub fn weighted_row_index(sums: &[f64], weighting: RowWeighting) -> Option<f64> {
    let (num, den) = sums
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (i, &s)| {
            let i = i as f64;
            match weighting {
                RowWeighting::SquaredSums => (num + (i * s) * (i * s), den + s * s),
                RowWeighting::LinearRms => (num + i * i * s, den + s),
                RowWeighting::Centroid => (num + i * s, den + s),
            }
        });
    if den <= 0.0 {
        return None;
    }
    Some(match weighting {
        RowWeighting::Centroid => num / den,
        _ => (num / den).sqrt(),
    })
}

/// Labeled emission height in meters, default weighting.
pub fn label_emission_height(
    frame: &Frame,
    cal: &PixelCalibration,
    geom: &GeometryState,
) -> Result<f64, LabelError> {
    label_emission_height_with(frame, cal, geom, RowWeighting::default())
}

pub fn label_emission_height_with(
    frame: &Frame,
    cal: &PixelCalibration,
    geom: &GeometryState,
    weighting: RowWeighting,
) -> Result<f64, LabelError> {
    if frame.kind() != FrameKind::InvertedEmissivity {
        return Err(LabelError::WrongKind(frame.kind()));
    }
    let j_x = outboard_start(frame, cal, geom)?;
    let sums = outboard_row_sums(frame, j_x);
    let row = weighted_row_index(&sums, weighting)
        .ok_or(LabelError::AllZeroOutboard { j_x: j_x as i64 })?;
    Ok(cal.z_of_row(row))
}

/// Labels every campaign entry, pairing each label with its camera frame.
///
/// Frames are processed in parallel; the result order matches the input.
pub fn label_dataset(
    frames: &[CampaignFrame],
    cal: &PixelCalibration,
) -> Result<Vec<LabeledSample>, LabelError> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let expected = first.inverted.dims();
    for (index, entry) in frames.iter().enumerate() {
        for got in [entry.inverted.dims(), entry.camera.dims()] {
            if got != expected {
                return Err(LabelError::DimensionMismatch {
                    index,
                    expected,
                    got,
                });
            }
        }
    }
    frames
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let z = label_emission_height(&entry.inverted, cal, &entry.geometry).map_err(|e| {
                LabelError::AtIndex {
                    index,
                    source: Box::new(e),
                }
            })?;
            Ok(LabeledSample {
                frame: entry.camera.clone(),
                z_e_label: z,
                geometry: entry.geometry,
            })
        })
        .collect()
}
