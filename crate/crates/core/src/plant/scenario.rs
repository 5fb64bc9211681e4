//! Scripted shot: target, geometry and brightness waveforms.

use thiserror::Error;

use crate::geometry::GeometryState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("`{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("`{key}`: knot times must be strictly increasing (t = {t} after {prev})")]
    NonIncreasing { key: String, t: f64, prev: f64 },
    #[error("`{key}`: expected {expected} comma-separated numbers, got {got}")]
    Arity {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("{0} waveform has no knots")]
    Empty(&'static str),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Piecewise-linear waveform with `N` channels, held constant outside its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<const N: usize> {
    knots: Vec<(f64, [f64; N])>,
}

impl<const N: usize> Default for Waveform<N> {
    fn default() -> Self {
        Self { knots: Vec::new() }
    }
}

impl<const N: usize> Waveform<N> {
    pub fn new(knots: Vec<(f64, [f64; N])>) -> Result<Self, ScenarioError> {
        let mut w = Self::default();
        for (t, v) in knots {
            w.push(t, v).map_err(|e| match e {
                ScenarioError::NonIncreasing { t, prev, .. } => ScenarioError::NonIncreasing {
                    key: "waveform".into(),
                    t,
                    prev,
                },
                other => other,
            })?;
        }
        Ok(w)
    }

    pub fn constant(v: [f64; N]) -> Self {
        Self {
            knots: vec![(0.0, v)],
        }
    }

    pub fn push(&mut self, t: f64, v: [f64; N]) -> Result<(), ScenarioError> {
        if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(ScenarioError::BadValue {
                key: "waveform".into(),
                value: format!("{t} {v:?}"),
            });
        }
        if let Some(&(prev, _)) = self.knots.last() {
            if t <= prev {
                return Err(ScenarioError::NonIncreasing {
                    key: String::new(),
                    t,
                    prev,
                });
            }
        }
        self.knots.push((t, v));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn knots(&self) -> &[(f64, [f64; N])] {
        &self.knots
    }

    /// Linear interpolation between knots.
    pub fn at(&self, t: f64) -> [f64; N] {
        let k = &self.knots;
        assert!(!k.is_empty(), "evaluating an empty waveform");
        let idx = k.partition_point(|(tk, _)| *tk <= t);
        if idx == 0 {
            return k[0].1;
        }
        if idx == k.len() {
            return k[k.len() - 1].1;
        }
        let (t0, v0) = k[idx - 1];
        let (t1, v1) = k[idx];
        let a = (t - t0) / (t1 - t0);
        std::array::from_fn(|c| v0[c] + a * (v1[c] - v0[c]))
    }

    /// Value of the last knot at or before `t` (zero-order hold).
    pub fn held(&self, t: f64) -> [f64; N] {
        let k = &self.knots;
        assert!(!k.is_empty(), "evaluating an empty waveform");
        let idx = k.partition_point(|(tk, _)| *tk <= t);
        k[idx.saturating_sub(1)].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Front position at t = 0, as DZ.
    pub initial_dz: f64,
    pub target: Waveform<1>,
    pub geometry: Waveform<3>,
    pub brightness: Waveform<1>,
    /// Open-loop command schedule, held between knots.
    pub command: Waveform<1>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration: 7.0,
            dt: 1.0 / 30.0,
            seed: 0,
            initial_dz: 0.2,
            target: Waveform::default(),
            geometry: Waveform::default(),
            brightness: Waveform::default(),
            command: Waveform::default(),
        }
    }
}

fn parse_numbers<const N: usize>(key: &str, value: &str) -> Result<(f64, [f64; N]), ScenarioError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N + 1 {
        return Err(ScenarioError::Arity {
            key: key.into(),
            expected: N + 1,
            got: parts.len(),
        });
    }
    let mut nums = [0.0; N];
    let bad = || ScenarioError::BadValue {
        key: key.into(),
        value: value.into(),
    };
    let t: f64 = parts[0].parse().map_err(|_| bad())?;
    for (slot, p) in nums.iter_mut().zip(&parts[1..]) {
        *slot = p.parse().map_err(|_| bad())?;
    }
    Ok((t, nums))
}

fn push_knot<const N: usize>(
    w: &mut Waveform<N>,
    key: &str,
    value: &str,
) -> Result<(), ScenarioError> {
    let (t, v) = parse_numbers::<N>(key, value)?;
    w.push(t, v).map_err(|e| match e {
        ScenarioError::NonIncreasing { t, prev, .. } => ScenarioError::NonIncreasing {
            key: key.into(),
            t,
            prev,
        },
        ScenarioError::BadValue { .. } => ScenarioError::BadValue {
            key: key.into(),
            value: value.into(),
        },
        other => other,
    })
}

impl Scenario {
    /// Detach, hold, partial reattach: DZ 0.2 -> 0.8 -> 0.4 over seven
    /// seconds, with two-second ramps.
    pub fn headline() -> Self {
        let target = Waveform::new(vec![
            (0.0, [0.2]),
            (0.3, [0.2]),
            (2.3, [0.8]),
            (4.0, [0.8]),
            (6.0, [0.4]),
            (7.0, [0.4]),
        ])
        .expect("static knots are increasing");
        Self {
            target,
            ..Self::default()
        }
        .finalized()
    }

    /// Applies one `key = value` line. Returns `Ok(false)` for keys this
    /// type does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool, ScenarioError> {
        let num = |v: &str| -> Result<f64, ScenarioError> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ScenarioError::BadValue {
                    key: key.into(),
                    value: v.into(),
                })
        };
        match key {
            "duration" => self.duration = num(value)?,
            "dt" => self.dt = num(value)?,
            "initial_dz" => self.initial_dz = num(value)?,
            "seed" => {
                self.seed = value.parse().map_err(|_| ScenarioError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "target" => push_knot(&mut self.target, key, value)?,
            "geom" => push_knot(&mut self.geometry, key, value)?,
            "bright" => push_knot(&mut self.brightness, key, value)?,
            "command" => push_knot(&mut self.command, key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Fills unset geometry and brightness with constants.
    pub fn finalized(mut self) -> Self {
        if self.geometry.is_empty() {
            let g = GeometryState::default();
            self.geometry = Waveform::constant([g.r_x, g.z_x, g.z_s]);
        }
        if self.brightness.is_empty() {
            self.brightness = Waveform::constant([1.0]);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "duration = {}",
                self.duration
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.duration) {
            return Err(ScenarioError::Invalid(format!("dt = {}", self.dt)));
        }
        for &(t, [r_x, z_x, z_s]) in self.geometry.knots() {
            GeometryState::new(r_x, z_x, z_s)
                .map_err(|e| ScenarioError::Invalid(format!("geom at t = {t}: {e}")))?;
        }
        if self.brightness.knots().iter().any(|(_, [b])| *b < 0.0) {
            return Err(ScenarioError::Invalid("negative brightness".into()));
        }
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn time(&self, tick: usize) -> f64 {
        tick as f64 * self.dt
    }

    pub fn geometry_at(&self, t: f64) -> GeometryState {
        let [r_x, z_x, z_s] = self.geometry.at(t);
        // Interpolating between valid knots keeps z_x > z_s.
        GeometryState { r_x, z_x, z_s }
    }

    pub fn target_at(&self, t: f64) -> Result<f64, ScenarioError> {
        if self.target.is_empty() {
            return Err(ScenarioError::Empty("target"));
        }
        Ok(self.target.at(t)[0])
    }

    pub fn brightness_at(&self, t: f64) -> f64 {
        self.brightness.at(t)[0]
    }

    pub fn command_at(&self, t: f64) -> Result<f64, ScenarioError> {
        if self.command.is_empty() {
            return Err(ScenarioError::Empty("command"));
        }
        Ok(self.command.held(t)[0])
    }
}
