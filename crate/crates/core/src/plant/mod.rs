//! Synthetic divertor plant.
//!
//! One scalar state, the rise of the emission front above the strike point,
//! responds to the delayed gas command through a first-order lag. The local
//! gain steepens past the cliff and rolls off toward the X-point:
//!
//! ```text
//! G(DZ) = gain * (1 + (steepen - 1) * sigmoid((DZ - center) / width)) * (1 - rolloff * DZ^4)
//! ```
//!
//! With `steepen = 1` and `rolloff = 0` the command-to-DZ map is exactly an
//! FOPDT system with `k = gain / leg_length`.

mod render;
mod scenario;

use thiserror::Error;

use crate::control::DelayLine;
use crate::geometry::GeometryState;

pub use render::{proxy_prad, render_camera_frame, render_inverted_emissivity, RenderParams};
pub use scenario::{Scenario, ScenarioError, Waveform};

/// Upper bound on the front, as a fraction of the leg above the X-point.
pub const FRONT_CEILING: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("{what} at ({r:.4} m, {z:.4} m) falls outside the frame")]
    GeometryOffFrame { what: &'static str, r: f64, z: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub gas_dead_time: f64,
    pub gas_tau: f64,
    /// Meters of front rise per command unit, below the cliff.
    pub gain: f64,
    pub cliff_center: f64,
    pub cliff_steepen: f64,
    pub cliff_width: f64,
    pub xpoint_rolloff: f64,
    pub prad_coeff: f64,
    /// Proxy noise as a fraction of `prad_coeff`.
    pub prad_noise: f64,
    /// Additive camera noise, in counts.
    pub noise_sigma: f64,
    pub render: RenderParams,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            gas_dead_time: 0.2,
            gas_tau: 0.3,
            gain: 0.05,
            cliff_center: 0.5,
            cliff_steepen: 1.5,
            cliff_width: 0.1,
            xpoint_rolloff: 0.3,
            prad_coeff: 1.0,
            prad_noise: 0.02,
            noise_sigma: 2.0,
            render: RenderParams::default(),
        }
    }
}

impl PlantParams {
    /// Linear plant: no cliff, no rolloff.
    pub fn linear() -> Self {
        Self {
            cliff_steepen: 1.0,
            xpoint_rolloff: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let checks: [(&'static str, f64, bool); 9] = [
            (
                "gas_dead_time",
                self.gas_dead_time,
                self.gas_dead_time >= 0.0,
            ),
            ("gas_tau", self.gas_tau, self.gas_tau > 0.0),
            ("gain", self.gain, true),
            ("cliff_center", self.cliff_center, true),
            (
                "cliff_steepen",
                self.cliff_steepen,
                self.cliff_steepen >= 1.0,
            ),
            ("cliff_width", self.cliff_width, self.cliff_width > 0.0),
            (
                "xpoint_rolloff",
                self.xpoint_rolloff,
                (0.0..=1.0).contains(&self.xpoint_rolloff),
            ),
            ("prad_noise", self.prad_noise, self.prad_noise >= 0.0),
            ("noise_sigma", self.noise_sigma, self.noise_sigma >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !(value.is_finite() && ok) {
                return Err(PlantError::InvalidParam { name, value });
            }
        }
        if !self.prad_coeff.is_finite() {
            return Err(PlantError::InvalidParam {
                name: "prad_coeff",
                value: self.prad_coeff,
            });
        }
        self.render.validate()
    }

    /// Local gain in meters per command unit at the given DZ.
    pub fn local_gain(&self, dz: f64) -> f64 {
        let s = 1.0 / (1.0 + (-(dz - self.cliff_center) / self.cliff_width).exp());
        let steep = 1.0 + (self.cliff_steepen - 1.0) * s;
        let roll = (1.0 - self.xpoint_rolloff * dz.max(0.0).powi(4)).max(0.0);
        self.gain * steep * roll
    }
}

#[derive(Debug, Clone)]
pub struct PlantState {
    pub t: f64,
    /// Front height above the strike point, m.
    rise: f64,
    pub geometry: GeometryState,
    pub brightness: f64,
    delay: DelayLine,
}

impl PlantState {
    /// Plant at rest with the front at fraction `dz` of the leg and no
    /// command in the delay line.
    pub fn at_rest(geometry: GeometryState, dz: f64, params: &PlantParams) -> Self {
        let mut s = Self {
            t: 0.0,
            rise: 0.0,
            geometry,
            brightness: 1.0,
            delay: DelayLine::new(params.gas_dead_time, 0.0),
        };
        s.set_dz(dz);
        s
    }

    /// Plant in steady state at fraction `dz`, holding the command that sustains it.
    pub fn steady(geometry: GeometryState, dz: f64, params: &PlantParams) -> (Self, f64) {
        let mut s = Self::at_rest(geometry, dz, params);
        let g = params.local_gain(s.dz_true());
        let u = if g != 0.0 { s.rise / g } else { 0.0 };
        s.delay = DelayLine::new(params.gas_dead_time, u);
        (s, u)
    }

    pub fn rise(&self) -> f64 {
        self.rise
    }

    pub fn true_front_z(&self) -> f64 {
        self.geometry.z_s + self.rise
    }

    pub fn dz_true(&self) -> f64 {
        self.rise / self.geometry.leg_length()
    }

    pub fn set_dz(&mut self, dz: f64) {
        self.rise = dz * self.geometry.leg_length();
        self.clamp();
    }

    /// Moves the geometry while keeping the front at the same leg fraction.
    pub fn set_geometry(&mut self, geometry: GeometryState) {
        let f = self.dz_true();
        self.geometry = geometry;
        self.set_dz(f);
    }

    fn clamp(&mut self) {
        let l = self.geometry.leg_length();
        self.rise = self.rise.clamp(0.0, (1.0 + FRONT_CEILING) * l);
    }
}

/// Issues `command` at the current time and advances the plant by `dt`.
///
/// The delayed command is held piecewise constant, so each step is
/// integrated exactly for a gain frozen at the step start.
pub fn plant_step(state: &mut PlantState, params: &PlantParams, command: f64, dt: f64) {
    let g = params.local_gain(state.dz_true());
    state.delay.push(state.t, command);
    let t1 = state.t + dt;
    for (d, u) in state.delay.segments(state.t, t1) {
        let target = g * u;
        state.rise = target + (state.rise - target) * (-d / params.gas_tau).exp();
    }
    state.t = t1;
    state.clamp();
}
