//! The DZ control variable: where the emission front sits between the
//! strike point (0) and the X-point (1).
//!
//! The `rad` variant first lowers the inferred height by
//! `Z_adj = alpha (R_X - R_edge)(Z_X - Z_S)`, which cancels the apparent
//! vertical shift the camera sees when the X-point moves radially.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::GeometryState;

/// Range the controller sees; the logged DZ stays unclamped.
pub const CONTROL_CLAMP: (f64, f64) = (-0.2, 1.5);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DzError {
    #[error("X-point and strike point coincide (z = {0})")]
    DegenerateGeometry(f64),
    #[error("r_edge must be positive, got {0}")]
    InvalidEdge(f64),
    #[error("adjustment factor must be finite")]
    InvalidAlpha,
    #[error("unknown DZ variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DzVariant {
    Base,
    Hist,
    #[default]
    Norm,
    Rad,
}

impl DzVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DzVariant::Base => "base",
            DzVariant::Hist => "hist",
            DzVariant::Norm => "norm",
            DzVariant::Rad => "rad",
        }
    }
}

impl fmt::Display for DzVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DzVariant {
    type Err = DzError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(DzVariant::Base),
            "hist" => Ok(DzVariant::Hist),
            "norm" => Ok(DzVariant::Norm),
            "rad" => Ok(DzVariant::Rad),
            other => Err(DzError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DzParams {
    adjust_alpha: f64,
    r_edge: f64,
    pub variant: DzVariant,
}

impl Default for DzParams {
    fn default() -> Self {
        Self {
            adjust_alpha: 2.1,
            r_edge: 1.35,
            variant: DzVariant::Norm,
        }
    }
}

impl DzParams {
    pub fn new(adjust_alpha: f64, r_edge: f64, variant: DzVariant) -> Result<Self, DzError> {
        if !adjust_alpha.is_finite() {
            return Err(DzError::InvalidAlpha);
        }
        if !(r_edge.is_finite() && r_edge > 0.0) {
            return Err(DzError::InvalidEdge(r_edge));
        }
        Ok(Self {
            adjust_alpha,
            r_edge,
            variant,
        })
    }

    pub fn with_variant(self, variant: DzVariant) -> Self {
        Self { variant, ..self }
    }

    pub fn adjust_alpha(&self) -> f64 {
        self.adjust_alpha
    }

    pub fn r_edge(&self) -> f64 {
        self.r_edge
    }
}

/// One evaluated DZ value with the inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DzSample {
    pub t: f64,
    pub z_e: f64,
    pub dz: f64,
    pub geometry: GeometryState,
}

impl DzSample {
    /// The copy handed to the controller.
    pub fn clamped(&self) -> f64 {
        clamp_for_control(self.dz)
    }

    /// The (possibly adjusted) height fell below the strike point.
    pub fn below_strike(&self) -> bool {
        self.dz < 0.0
    }
}

pub fn clamp_for_control(dz: f64) -> f64 {
    dz.clamp(CONTROL_CLAMP.0, CONTROL_CLAMP.1)
}

fn leg(geom: &GeometryState) -> Result<f64, DzError> {
    let l = geom.z_x - geom.z_s;
    if l == 0.0 {
        return Err(DzError::DegenerateGeometry(geom.z_x));
    }
    Ok(l)
}

/// `1 - (z_x - z_e)/(z_x - z_s)`, unclamped.
pub fn dz_base(z_e: f64, geom: &GeometryState) -> Result<f64, DzError> {
    Ok(1.0 - (geom.z_x - z_e) / leg(geom)?)
}

pub fn z_adjust(geom: &GeometryState, params: &DzParams) -> f64 {
    params.adjust_alpha * (geom.r_x - params.r_edge) * (geom.z_x - geom.z_s)
}

pub fn dz_rad(z_e_norm: f64, geom: &GeometryState, params: &DzParams) -> Result<f64, DzError> {
    dz_base(z_e_norm - z_adjust(geom, params), geom)
}

/// DZ for the configured variant. Only `rad` differs here; the other
/// variants differ upstream in how `z_e` was inferred.
pub fn compute_dz(z_e: f64, geom: &GeometryState, params: &DzParams) -> Result<f64, DzError> {
    match params.variant {
        DzVariant::Base | DzVariant::Hist | DzVariant::Norm => dz_base(z_e, geom),
        DzVariant::Rad => dz_rad(z_e, geom, params),
    }
}

pub fn sample_dz(
    t: f64,
    z_e: f64,
    geom: &GeometryState,
    params: &DzParams,
) -> Result<DzSample, DzError> {
    Ok(DzSample {
        t,
        z_e,
        dz: compute_dz(z_e, geom, params)?,
        geometry: *geom,
    })
}
