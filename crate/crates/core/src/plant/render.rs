//! Camera-like and inverted-emissivity renderers.
//!
//! Both place a Gaussian emission blob on the outer leg, whose radius at
//! height `z` is `r_x + leg_slope * (z_x - z)`. The camera view adds a
//! background, a static ring band, and a perspective offset: the blob
//! appears `view_skew * (r_x - view_r_ref) * leg_length` higher than it is.
//! That offset is the radial artifact the DZ adjustment removes. In the
//! camera view the blob column itself sits at `view_r_ref`, moved towards
//! the true `r_x` by the fraction `view_column_shift`.

use rand_distr::{Distribution, StandardNormal};

use crate::frame::{Frame, FrameKind};
use crate::geometry::PixelCalibration;
use crate::preprocess::frame_rng;

use super::{PlantError, PlantParams, PlantState};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    /// Blob vertical sigma as a fraction of the leg length.
    pub sigma_z_frac: f64,
    /// Radial sigma of the inverted blob, m.
    pub inverted_sigma_r: f64,
    /// Radial sigma of the camera blob, m.
    pub camera_sigma_r: f64,
    pub leg_slope: f64,
    pub blob_amplitude: f64,
    pub background: f64,
    pub ring_amplitude: f64,
    pub ring_z: f64,
    pub ring_sigma: f64,
    pub view_skew: f64,
    pub view_r_ref: f64,
    /// Fraction of the X-point's radial offset from `view_r_ref` that moves
    /// the blob sideways in the camera view.
    pub view_column_shift: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            sigma_z_frac: 0.08,
            inverted_sigma_r: 0.02,
            camera_sigma_r: 0.08,
            leg_slope: 0.4,
            blob_amplitude: 200.0,
            background: 5.0,
            ring_amplitude: 40.0,
            ring_z: -0.95,
            ring_sigma: 0.01,
            view_skew: 2.1,
            view_r_ref: 1.35,
            view_column_shift: 0.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let checks: [(&'static str, f64, bool); 12] = [
            ("sigma_z_frac", self.sigma_z_frac, self.sigma_z_frac > 0.0),
            (
                "inverted_sigma_r",
                self.inverted_sigma_r,
                self.inverted_sigma_r > 0.0,
            ),
            (
                "camera_sigma_r",
                self.camera_sigma_r,
                self.camera_sigma_r > 0.0,
            ),
            ("leg_slope", self.leg_slope, true),
            (
                "blob_amplitude",
                self.blob_amplitude,
                self.blob_amplitude >= 0.0,
            ),
            ("background", self.background, self.background >= 0.0),
            (
                "ring_amplitude",
                self.ring_amplitude,
                self.ring_amplitude >= 0.0,
            ),
            ("ring_z", self.ring_z, true),
            ("ring_sigma", self.ring_sigma, self.ring_sigma > 0.0),
            ("view_skew", self.view_skew, true),
            ("view_r_ref", self.view_r_ref, true),
            ("view_column_shift", self.view_column_shift, true),
        ];
        for (name, value, ok) in checks {
            if !(value.is_finite() && ok) {
                return Err(PlantError::InvalidParam { name, value });
            }
        }
        Ok(())
    }

    pub fn leg_radius(&self, state: &PlantState, z: f64) -> f64 {
        state.geometry.r_x + self.leg_slope * (state.geometry.z_x - z)
    }

    /// Radius at which the camera sees the leg at height `z`.
    pub fn apparent_leg_radius(&self, state: &PlantState, z: f64) -> f64 {
        let g = &state.geometry;
        let r_x = self.view_r_ref + self.view_column_shift * (g.r_x - self.view_r_ref);
        r_x + self.leg_slope * (g.z_x - z)
    }

    /// Height at which the camera sees the front.
    pub fn apparent_front_z(&self, state: &PlantState) -> f64 {
        let g = &state.geometry;
        state.true_front_z() + self.view_skew * (g.r_x - self.view_r_ref) * g.leg_length()
    }
}

fn check_on_frame(
    cal: &PixelCalibration,
    w: usize,
    h: usize,
    what: &'static str,
    r: f64,
    z: f64,
) -> Result<(), PlantError> {
    let (row, col) = cal.physical_to_pixel(r, z);
    let inside = (-0.5..=h as f64 - 0.5).contains(&row) && (-0.5..=w as f64 - 0.5).contains(&col);
    if inside {
        Ok(())
    } else {
        Err(PlantError::GeometryOffFrame { what, r, z })
    }
}

fn check_geometry(
    state: &PlantState,
    cal: &PixelCalibration,
    w: usize,
    h: usize,
) -> Result<(), PlantError> {
    let g = &state.geometry;
    check_on_frame(cal, w, h, "X-point", g.r_x, g.z_x)?;
    check_on_frame(cal, w, h, "strike point", g.r_x, g.z_s)?;
    check_on_frame(cal, w, h, "front", g.r_x, state.true_front_z())
}

/// Separable Gaussian, truncated at 3 sigma in each direction.
fn blob_profiles(
    cal: &PixelCalibration,
    w: usize,
    h: usize,
    (r_c, z_c): (f64, f64),
    (sigma_r, sigma_z): (f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let gauss = |x: f64, s: f64| {
        let u = x / s;
        if u.abs() > 3.0 {
            0.0
        } else {
            (-0.5 * u * u).exp()
        }
    };
    let rows = (0..h)
        .map(|i| gauss(cal.z_of_row(i as f64) - z_c, sigma_z))
        .collect();
    let cols = (0..w)
        .map(|j| gauss(cal.r_of_col(j as f64) - r_c, sigma_r))
        .collect();
    (rows, cols)
}

/// Noise-free emissivity on the `(R, Z)` grid, blob centered on the true front.
pub fn render_inverted_emissivity(
    state: &PlantState,
    params: &PlantParams,
    cal: &PixelCalibration,
    width: usize,
    height: usize,
) -> Result<Frame, PlantError> {
    check_geometry(state, cal, width, height)?;
    let rp = &params.render;
    let z = state.true_front_z();
    let sigma_z = rp.sigma_z_frac * state.geometry.leg_length();
    let (rows, cols) = blob_profiles(
        cal,
        width,
        height,
        (rp.leg_radius(state, z), z),
        (rp.inverted_sigma_r, sigma_z),
    );
    Ok(
        Frame::from_fn(width, height, FrameKind::InvertedEmissivity, |i, j| {
            rows[i] * cols[j]
        })
        .expect("renderer output is finite and non-negative"),
    )
}

/// Tangential camera view: background, ring, blob at the apparent front
/// height, scaled by brightness, then additive Gaussian noise clamped at 0.
///
/// Noise is drawn from stream `frame_index` of `seed`, so any frame can be
/// reproduced on its own.
pub fn render_camera_frame(
    state: &PlantState,
    params: &PlantParams,
    cal: &PixelCalibration,
    (width, height): (usize, usize),
    seed: u64,
    frame_index: u64,
) -> Result<Frame, PlantError> {
    check_geometry(state, cal, width, height)?;
    let rp = &params.render;
    let z_app = rp.apparent_front_z(state);
    let sigma_z = rp.sigma_z_frac * state.geometry.leg_length();
    let r_c = rp.apparent_leg_radius(state, state.true_front_z());
    let (rows, cols) = blob_profiles(
        cal,
        width,
        height,
        (r_c, z_app),
        (rp.camera_sigma_r, sigma_z),
    );
    let ring: Vec<f64> = (0..height)
        .map(|i| {
            let u = (cal.z_of_row(i as f64) - rp.ring_z) / rp.ring_sigma;
            rp.ring_amplitude * (-0.5 * u * u).exp()
        })
        .collect();

    let b = state.brightness.max(0.0);
    let sigma = params.noise_sigma;
    let mut rng = frame_rng(seed, frame_index);
    let mut data = Vec::with_capacity(width * height);
    for i in 0..height {
        for col in &cols {
            let clean = b * (rp.background + ring[i] + rp.blob_amplitude * rows[i] * col);
            let v = if sigma > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                (clean + sigma * n).max(0.0)
            } else {
                clean
            };
            data.push(v);
        }
    }
    Ok(Frame::new(width, height, data, FrameKind::RawCamera).expect("renderer output is valid"))
}

/// Radiated-power proxy, quadratic in the true DZ. `noise` is a standard
/// normal draw supplied by the caller.
pub fn proxy_prad(state: &PlantState, params: &PlantParams, noise: f64) -> f64 {
    let dz = state.dz_true();
    params.prad_coeff * (dz * dz + params.prad_noise * noise)
}
