//! Pixel calibration and equilibrium geometry.
//!
//! Pixel space uses `(row, col)` with row 0 at the top of the frame. The
//! calibration carries the sign of each axis, so a frame whose rows run
//! downward in physical height simply has `dz < 0`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("calibration step must be finite and non-zero (dz = {dz}, dr = {dr})")]
    ZeroStep { dz: f64, dr: f64 },
    #[error("calibration origin must be finite")]
    NonFiniteOrigin,
    #[error("X-point must sit above the strike point (z_x = {z_x}, z_s = {z_s})")]
    XPointBelowStrike { z_x: f64, z_s: f64 },
    #[error("geometry values must be finite")]
    NonFinite,
}

/// Affine map between pixel indices and physical `(R, Z)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCalibration {
    /// Physical height of row 0.
    pub z0: f64,
    /// Meters per row (signed).
    pub dz: f64,
    /// Major radius of column 0.
    pub r0: f64,
    /// Meters per column (signed).
    pub dr: f64,
}

impl PixelCalibration {
    pub fn new(z0: f64, dz: f64, r0: f64, dr: f64) -> Result<Self, GeometryError> {
        if !(dz.is_finite() && dr.is_finite()) || dz == 0.0 || dr == 0.0 {
            return Err(GeometryError::ZeroStep { dz, dr });
        }
        if !(z0.is_finite() && r0.is_finite()) {
            return Err(GeometryError::NonFiniteOrigin);
        }
        Ok(Self { z0, dz, r0, dr })
    }

    /// Calibration that maps a `width x height` frame onto the physical
    /// window `[r_min, r_max] x [z_min, z_max]`, row 0 at `z_max`.
    pub fn spanning(
        width: usize,
        height: usize,
        r_min: f64,
        r_max: f64,
        z_min: f64,
        z_max: f64,
    ) -> Result<Self, GeometryError> {
        let dr = (r_max - r_min) / width as f64;
        let dz = -(z_max - z_min) / height as f64;
        Self::new(z_max, dz, r_min, dr)
    }

    /// Desk-scale default: 180 x 120 pixels over the lower divertor.
    pub fn desk_default() -> Self {
        Self::new(-0.85, -0.005, 1.0, 0.005).expect("static calibration is valid")
    }

    /// Physical `(R, Z)` of a (possibly fractional) pixel position.
    pub fn pixel_to_physical(&self, row: f64, col: f64) -> (f64, f64) {
        (self.r0 + col * self.dr, self.z0 + row * self.dz)
    }

    /// Fractional `(row, col)` of a physical point.
    pub fn physical_to_pixel(&self, r: f64, z: f64) -> (f64, f64) {
        ((z - self.z0) / self.dz, (r - self.r0) / self.dr)
    }

    pub fn row_of(&self, z: f64) -> f64 {
        (z - self.z0) / self.dz
    }

    pub fn col_of(&self, r: f64) -> f64 {
        (r - self.r0) / self.dr
    }

    pub fn z_of_row(&self, row: f64) -> f64 {
        self.z0 + row * self.dz
    }

    pub fn r_of_col(&self, col: f64) -> f64 {
        self.r0 + col * self.dr
    }
}

/// Equilibrium stand-in for one time step: X-point and strike point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryState {
    /// X-point major radius, m.
    pub r_x: f64,
    /// X-point height, m.
    pub z_x: f64,
    /// Strike-point height, m.
    pub z_s: f64,
}

impl GeometryState {
    pub fn new(r_x: f64, z_x: f64, z_s: f64) -> Result<Self, GeometryError> {
        if !(r_x.is_finite() && z_x.is_finite() && z_s.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if z_x <= z_s {
            return Err(GeometryError::XPointBelowStrike { z_x, z_s });
        }
        Ok(Self { r_x, z_x, z_s })
    }

    /// Vertical leg length `z_x - z_s`.
    pub fn leg_length(&self) -> f64 {
        self.z_x - self.z_s
    }

    /// Height at fraction `f` of the leg (0 at the strike point, 1 at the X-point).
    pub fn height_at_fraction(&self, f: f64) -> f64 {
        self.z_s + f * self.leg_length()
    }

    /// Fraction of the leg at height `z`; the inverse of [`Self::height_at_fraction`].
    pub fn fraction_at_height(&self, z: f64) -> f64 {
        1.0 - (self.z_x - z) / (self.z_x - self.z_s)
    }
}

impl Default for GeometryState {
    fn default() -> Self {
        Self {
            r_x: 1.40,
            z_x: -1.05,
            z_s: -1.30,
        }
    }
}
