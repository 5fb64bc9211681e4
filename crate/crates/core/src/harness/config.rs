//! Line-oriented `key = value` configuration.
//!
//! ```text
//! # comments run to end of line
//! duration = 7
//! target = 0, 0.2          # t, dz knots; repeat the key for more knots
//! geom = 0, 1.52, -1.05, -1.30
//! bright = 0, 1.0
//! command = 0, 1.0         # open-loop command knots (held)
//! plant.gas_tau = 0.3
//! render.view_skew = 2.1
//! frame.width = 180
//! pid.g_p = 2.5
//! dz.variant = rad
//! gen.samples = 600
//! train.variant = norm
//! ```
//!
//! Scalar keys may appear once; knot keys accumulate. Unknown keys are
//! rejected.

use std::collections::HashSet;
use std::path::Path;

use crate::control::{ControllerState, PidGains};
use crate::dzmetric::{DzParams, DzVariant};
use crate::geometry::PixelCalibration;
use crate::plant::{PlantParams, Scenario};
use crate::preprocess::Preprocessing;

use super::HarnessError;

/// Frame size and the physical window it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSetup {
    pub width: usize,
    pub height: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for FrameSetup {
    fn default() -> Self {
        Self {
            width: 180,
            height: 120,
            r_min: 1.0,
            r_max: 1.9,
            z_min: -1.45,
            z_max: -0.85,
        }
    }
}

impl FrameSetup {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn calibration(&self) -> Result<PixelCalibration, HarnessError> {
        if self.width == 0
            || self.height == 0
            || !(self.r_max > self.r_min)
            || !(self.z_max > self.z_min)
        {
            return Err(HarnessError::Validation(format!(
                "degenerate frame setup {self:?}"
            )));
        }
        PixelCalibration::spanning(
            self.width,
            self.height,
            self.r_min,
            self.r_max,
            self.z_min,
            self.z_max,
        )
        .map_err(|e| HarnessError::Validation(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidConfig {
    /// Explicit gains; `None` means tune from an identified plant.
    pub gains: Option<PidGains>,
    pub limits: (f64, f64),
    /// Closed-loop time constant for tuning, s.
    pub lambda: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            gains: None,
            limits: ControllerState::default().command_limits(),
            lambda: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub samples: usize,
    /// Fraction of samples held out for evaluation.
    pub heldout: f64,
    pub r_x: (f64, f64),
    pub z_x: (f64, f64),
    pub leg: (f64, f64),
    pub dz: (f64, f64),
    pub brightness: (f64, f64),
    /// Speckle amplitude relative to each frame's maximum.
    pub speckle_rel: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            samples: 600,
            heldout: 0.2,
            r_x: (1.35, 1.35),
            z_x: (-1.07, -1.03),
            leg: (0.23, 0.27),
            dz: (0.0, 1.25),
            brightness: (0.7, 1.3),
            speckle_rel: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Preprocessing,
    /// Ridge penalty; `None` uses the data-scaled default.
    pub lambda: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Preprocessing::Norm,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub scenario: Scenario,
    pub plant: PlantParams,
    pub frame: FrameSetup,
    pub pid: PidConfig,
    pub dz: DzParams,
    pub gen: GenConfig,
    pub train: TrainConfig,
}

#[derive(Default)]
struct PendingPid {
    g_p: Option<f64>,
    ratio_i: Option<f64>,
    ratio_d: Option<f64>,
    filter_tau: Option<f64>,
    u_min: Option<f64>,
    u_max: Option<f64>,
}

#[derive(Default)]
struct PendingDz {
    alpha: Option<f64>,
    r_edge: Option<f64>,
}

struct Parser {
    cfg: Config,
    pid: PendingPid,
    dz: PendingDz,
    seen: HashSet<String>,
}

fn num(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{value}` is not a finite number"))
}

fn count(value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("`{value}` is not a non-negative integer"))
}

fn range(value: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a] => {
            let v = num(a)?;
            Ok((v, v))
        }
        [a, b] => {
            let (lo, hi) = (num(a)?, num(b)?);
            if lo > hi {
                return Err(format!("range `{value}` has min > max"));
            }
            Ok((lo, hi))
        }
        _ => Err(format!("expected `min, max`, got `{value}`")),
    }
}

impl Parser {
    fn new(base: Config) -> Self {
        Self {
            cfg: base,
            pid: PendingPid::default(),
            dz: PendingDz::default(),
            seen: HashSet::new(),
        }
    }

    fn line(&mut self, key: &str, value: &str) -> Result<(), String> {
        let repeatable = matches!(key, "target" | "geom" | "bright" | "command");
        if !repeatable && !self.seen.insert(key.to_string()) {
            return Err(format!("duplicate key `{key}`"));
        }
        if self
            .cfg
            .scenario
            .apply(key, value)
            .map_err(|e| e.to_string())?
        {
            return Ok(());
        }
        let (section, name) = key
            .split_once('.')
            .ok_or_else(|| format!("unknown key `{key}`"))?;
        let unknown = || format!("unknown key `{key}`");
        match section {
            "plant" => {
                let p = &mut self.cfg.plant;
                let slot = match name {
                    "gas_dead_time" => &mut p.gas_dead_time,
                    "gas_tau" => &mut p.gas_tau,
                    "gain" => &mut p.gain,
                    "cliff_center" => &mut p.cliff_center,
                    "cliff_steepen" => &mut p.cliff_steepen,
                    "cliff_width" => &mut p.cliff_width,
                    "xpoint_rolloff" => &mut p.xpoint_rolloff,
                    "prad_coeff" => &mut p.prad_coeff,
                    "prad_noise" => &mut p.prad_noise,
                    "noise_sigma" => &mut p.noise_sigma,
                    _ => return Err(unknown()),
                };
                *slot = num(value)?;
            }
            "render" => {
                let r = &mut self.cfg.plant.render;
                let slot = match name {
                    "sigma_z_frac" => &mut r.sigma_z_frac,
                    "inverted_sigma_r" => &mut r.inverted_sigma_r,
                    "camera_sigma_r" => &mut r.camera_sigma_r,
                    "leg_slope" => &mut r.leg_slope,
                    "blob_amplitude" => &mut r.blob_amplitude,
                    "background" => &mut r.background,
                    "ring_amplitude" => &mut r.ring_amplitude,
                    "ring_z" => &mut r.ring_z,
                    "ring_sigma" => &mut r.ring_sigma,
                    "view_skew" => &mut r.view_skew,
                    "view_r_ref" => &mut r.view_r_ref,
                    "view_column_shift" => &mut r.view_column_shift,
                    _ => return Err(unknown()),
                };
                *slot = num(value)?;
            }
            "frame" => {
                let f = &mut self.cfg.frame;
                match name {
                    "width" => f.width = count(value)?,
                    "height" => f.height = count(value)?,
                    "r_min" => f.r_min = num(value)?,
                    "r_max" => f.r_max = num(value)?,
                    "z_min" => f.z_min = num(value)?,
                    "z_max" => f.z_max = num(value)?,
                    _ => return Err(unknown()),
                }
            }
            "pid" => {
                let p = &mut self.pid;
                let slot = match name {
                    "g_p" => &mut p.g_p,
                    "ratio_i" => &mut p.ratio_i,
                    "ratio_d" => &mut p.ratio_d,
                    "filter_tau" => &mut p.filter_tau,
                    "u_min" => &mut p.u_min,
                    "u_max" => &mut p.u_max,
                    "lambda" => {
                        let v = num(value)?;
                        if v <= 0.0 {
                            return Err("pid.lambda must be > 0".into());
                        }
                        self.cfg.pid.lambda = v;
                        return Ok(());
                    }
                    _ => return Err(unknown()),
                };
                *slot = Some(num(value)?);
            }
            "dz" => match name {
                "alpha" => self.dz.alpha = Some(num(value)?),
                "r_edge" => self.dz.r_edge = Some(num(value)?),
                "variant" => {
                    self.cfg.dz = self
                        .cfg
                        .dz
                        .with_variant(value.parse().map_err(|e| format!("{e}"))?)
                }
                _ => return Err(unknown()),
            },
            "gen" => {
                let g = &mut self.cfg.gen;
                match name {
                    "samples" => g.samples = count(value)?,
                    "heldout" => {
                        let v = num(value)?;
                        if !(0.0..1.0).contains(&v) {
                            return Err("gen.heldout must be in [0, 1)".into());
                        }
                        g.heldout = v;
                    }
                    "r_x" => g.r_x = range(value)?,
                    "z_x" => g.z_x = range(value)?,
                    "leg" => g.leg = range(value)?,
                    "dz" => g.dz = range(value)?,
                    "brightness" => g.brightness = range(value)?,
                    "speckle_rel" => {
                        let v = num(value)?;
                        if v < 0.0 {
                            return Err("gen.speckle_rel must be >= 0".into());
                        }
                        g.speckle_rel = v;
                    }
                    _ => return Err(unknown()),
                }
            }
            "train" => match name {
                "variant" => self.cfg.train.variant = value.parse().map_err(|e| format!("{e}"))?,
                "lambda" => {
                    let v = num(value)?;
                    if v < 0.0 {
                        return Err("train.lambda must be >= 0".into());
                    }
                    self.cfg.train.lambda = Some(v);
                }
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Config, String> {
        let p = &self.pid;
        let (lo, hi) = self.cfg.pid.limits;
        let limits = (p.u_min.unwrap_or(lo), p.u_max.unwrap_or(hi));
        ControllerState::new(limits).map_err(|e| e.to_string())?;
        self.cfg.pid.limits = limits;
        if p.g_p.is_some() || p.ratio_i.is_some() || p.ratio_d.is_some() {
            let g = PidGains::new(
                p.g_p.unwrap_or(0.0),
                p.ratio_i.unwrap_or(0.0),
                p.ratio_d.unwrap_or(0.0),
                p.filter_tau.unwrap_or(crate::control::TUNED_FILTER_TAU),
            )
            .map_err(|e| e.to_string())?;
            self.cfg.pid.gains = Some(g);
        } else if p.filter_tau.is_some() {
            return Err("pid.filter_tau given without pid.g_p".into());
        }
        if self.dz.alpha.is_some() || self.dz.r_edge.is_some() {
            let d = self.cfg.dz;
            self.cfg.dz = DzParams::new(
                self.dz.alpha.unwrap_or(d.adjust_alpha()),
                self.dz.r_edge.unwrap_or(d.r_edge()),
                d.variant,
            )
            .map_err(|e| e.to_string())?;
        }
        self.cfg.plant.validate().map_err(|e| e.to_string())?;
        let g = &self.cfg.gen;
        if g.leg.0 <= 0.0 || g.brightness.0 < 0.0 {
            return Err("gen.leg must be > 0 and gen.brightness >= 0".into());
        }
        Ok(self.cfg)
    }
}

impl Config {
    /// Parses configuration text on top of the defaults. `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let mut p = Parser::new(Config::default());
        let err = |line: usize, msg: String| HarnessError::Config {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut last = 0;
        for (i, raw) in text.lines().enumerate() {
            last = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            p.line(key.trim(), value.trim())
                .map_err(|m| err(i + 1, m))?;
        }
        p.finish().map_err(|m| err(last, m))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::input(path, e))?;
        Self::parse(&text, path)
    }

    /// Scenario ready to run: defaults filled in, the headline target used
    /// if none was given, and `seed` applied.
    pub fn scenario(&self, seed: u64) -> Result<Scenario, HarnessError> {
        let mut s = self.scenario.clone();
        if s.target.is_empty() {
            s.target = Scenario::headline().target;
        }
        s.seed = seed;
        let s = s.finalized();
        s.validate()?;
        Ok(s)
    }

    pub fn variant(&self) -> DzVariant {
        self.dz.variant
    }
}
