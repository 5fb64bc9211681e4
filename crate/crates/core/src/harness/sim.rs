//! Closed- and open-loop runs of the plant with the full measurement chain.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};

use crate::control::{
    fit_fopdt, pid_step, tune_pid_from_fopdt, ControllerState, FopdtFit, PidGains,
};
use crate::dzmetric::{clamp_for_control, compute_dz, DzParams};
use crate::frame::Frame;
use crate::geometry::PixelCalibration;
use crate::linmodel::LinearMap;
use crate::plant::{
    plant_step, proxy_prad, render_camera_frame, PlantParams, PlantState, Scenario,
};
use crate::preprocess::{frame_rng, prepare_realtime};

use super::{FrameSetup, HarnessError, Trace, TraceRow};

/// Offsets the proxy-power noise stream from the camera noise streams.
const PRAD_SEED_SALT: u64 = 0x5052_4144;

/// Everything a loop needs besides the scenario.
#[derive(Debug, Clone)]
pub struct LoopSetup<'a> {
    pub model: &'a LinearMap,
    pub gains: PidGains,
    pub dz: DzParams,
    pub plant: &'a PlantParams,
    pub frame: FrameSetup,
    pub limits: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean: Duration,
    pub p99: Duration,
    pub max: Duration,
}

impl LatencyStats {
    pub fn from_samples(mut d: Vec<Duration>) -> Self {
        if d.is_empty() {
            return Self::default();
        }
        d.sort_unstable();
        let n = d.len();
        let total: Duration = d.iter().sum();
        let p99 = d[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1];
        Self {
            samples: n,
            mean: total / n as u32,
            p99,
            max: d[n - 1],
        }
    }
}

impl std::fmt::Display for LatencyStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        write!(
            f,
            "n={} mean={:.3} ms p99={:.3} ms max={:.3} ms",
            self.samples,
            ms(self.mean),
            ms(self.p99),
            ms(self.max)
        )
    }
}

fn check_model(model: &LinearMap, frame: &FrameSetup) -> Result<(), HarnessError> {
    if model.dims() != frame.dims() {
        return Err(HarnessError::Validation(format!(
            "model expects {:?} frames but the renderer produces {:?}",
            model.dims(),
            frame.dims()
        )));
    }
    Ok(())
}

/// Estimated emission height from a raw camera frame.
fn measure(model: &LinearMap, frame: &Frame) -> Result<f64, HarnessError> {
    let prepared = prepare_realtime(frame, model.preprocessing())?;
    Ok(model.infer(&prepared)?)
}

struct Tick<'s> {
    scenario: &'s Scenario,
    plant: &'s PlantParams,
    cal: PixelCalibration,
    dims: (usize, usize),
}

impl Tick<'_> {
    /// Applies the scripted geometry and brightness for tick `i`.
    fn drive(&self, state: &mut PlantState, i: usize) {
        let t = self.scenario.time(i);
        state.set_geometry(self.scenario.geometry_at(t));
        state.brightness = self.scenario.brightness_at(t);
    }

    fn render(&self, state: &PlantState, i: usize) -> Result<Frame, HarnessError> {
        Ok(render_camera_frame(
            state,
            self.plant,
            &self.cal,
            self.dims,
            self.scenario.seed,
            i as u64,
        )?)
    }
}

/// Runs the feedback loop and returns the trace.
pub fn run_closed_loop(scenario: &Scenario, setup: &LoopSetup) -> Result<Trace, HarnessError> {
    run_closed_loop_timed(scenario, setup).map(|(trace, _, _)| trace)
}

/// As [`run_closed_loop`], also returning per-tick render-to-command latency
/// and the inference (preprocess + dot product) latency.
///
/// Per tick: drive geometry, render, preprocess, infer, DZ, PID on the
/// clamped DZ, log, then advance the plant by one period. The plant starts
/// in steady state at `initial_dz` and the controller is preloaded with the
/// command that holds it.
pub fn run_closed_loop_timed(
    scenario: &Scenario,
    setup: &LoopSetup,
) -> Result<(Trace, LatencyStats, LatencyStats), HarnessError> {
    scenario.validate()?;
    setup.plant.validate()?;
    check_model(setup.model, &setup.frame)?;
    let tick = Tick {
        scenario,
        plant: setup.plant,
        cal: setup.frame.calibration()?,
        dims: setup.frame.dims(),
    };
    let dt = scenario.dt;
    let (mut state, u0) =
        PlantState::steady(scenario.geometry_at(0.0), scenario.initial_dz, setup.plant);
    let mut ctrl = ControllerState::new(setup.limits)?;
    ctrl.preload(&setup.gains, u0);
    let mut prad_rng = frame_rng(scenario.seed.wrapping_add(PRAD_SEED_SALT), 0);

    let n = scenario.ticks();
    let mut rows = Vec::with_capacity(n);
    let mut tick_times = Vec::with_capacity(n);
    let mut infer_times = Vec::with_capacity(n);
    for i in 0..n {
        let t = scenario.time(i);
        tick.drive(&mut state, i);
        let target = scenario.target_at(t)?;
        let geom = state.geometry;

        let start = Instant::now();
        let frame = tick
            .render(&state, i)
            .map_err(|e| HarnessError::at_tick(i, e))?;
        let infer_start = Instant::now();
        let z_e = measure(setup.model, &frame).map_err(|e| HarnessError::at_tick(i, e))?;
        infer_times.push(infer_start.elapsed());
        let dz = compute_dz(z_e, &geom, &setup.dz).map_err(|e| HarnessError::at_tick(i, e))?;
        let command = pid_step(&mut ctrl, &setup.gains, target, clamp_for_control(dz), dt)
            .map_err(|e| HarnessError::at_tick(i, e))?;
        tick_times.push(start.elapsed());

        let noise: f64 = StandardNormal.sample(&mut prad_rng);
        rows.push(TraceRow {
            t,
            target,
            dz_measured: dz,
            dz_variant: setup.dz.variant,
            z_e,
            gas_command: command,
            true_front_z: state.true_front_z(),
            proxy_prad: proxy_prad(&state, setup.plant, noise),
            r_x: geom.r_x,
            z_x: geom.z_x,
            z_s: geom.z_s,
            below_strike: dz < 0.0,
        });
        plant_step(&mut state, setup.plant, command, dt);
    }
    Ok((
        Trace { rows },
        LatencyStats::from_samples(tick_times),
        LatencyStats::from_samples(infer_times),
    ))
}

/// Runs the plant on the scenario's command schedule, or on the command that
/// holds `initial_dz` if the schedule is empty.
///
/// DZ is measured through `model` when one is given, otherwise it is the
/// true DZ of the plant. The target column repeats the scenario target, or
/// holds 0 if the scenario has none.
pub fn run_open_loop(
    scenario: &Scenario,
    plant: &PlantParams,
    frame: &FrameSetup,
    model: Option<&LinearMap>,
    dz: &DzParams,
) -> Result<Trace, HarnessError> {
    scenario.validate()?;
    plant.validate()?;
    if let Some(m) = model {
        check_model(m, frame)?;
    }
    let tick = Tick {
        scenario,
        plant,
        cal: frame.calibration()?,
        dims: frame.dims(),
    };
    let (mut state, u0) = PlantState::steady(scenario.geometry_at(0.0), scenario.initial_dz, plant);
    let mut prad_rng = frame_rng(scenario.seed.wrapping_add(PRAD_SEED_SALT), 0);
    let n = scenario.ticks();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = scenario.time(i);
        tick.drive(&mut state, i);
        let geom = state.geometry;
        let command = if scenario.command.is_empty() {
            u0
        } else {
            scenario.command_at(t)?
        };
        let (z_e, dz_value) = match model {
            Some(m) => {
                let frame = tick
                    .render(&state, i)
                    .map_err(|e| HarnessError::at_tick(i, e))?;
                let z_e = measure(m, &frame).map_err(|e| HarnessError::at_tick(i, e))?;
                (
                    z_e,
                    compute_dz(z_e, &geom, dz).map_err(|e| HarnessError::at_tick(i, e))?,
                )
            }
            None => (state.true_front_z(), state.dz_true()),
        };
        let noise: f64 = StandardNormal.sample(&mut prad_rng);
        rows.push(TraceRow {
            t,
            target: if scenario.target.is_empty() {
                0.0
            } else {
                scenario.target_at(t)?
            },
            dz_measured: dz_value,
            dz_variant: dz.variant,
            z_e,
            gas_command: command,
            true_front_z: state.true_front_z(),
            proxy_prad: proxy_prad(&state, plant, noise),
            r_x: geom.r_x,
            z_x: geom.z_x,
            z_s: geom.z_s,
            below_strike: dz_value < 0.0,
        });
        plant_step(&mut state, plant, command, scenario.dt);
    }
    Ok(Trace { rows })
}

#[derive(Debug, Clone)]
pub struct SysidReport {
    pub fit: FopdtFit,
    pub gains: PidGains,
    pub closed_loop_tau: f64,
}

impl SysidReport {
    /// Fits an FOPDT model to an open-loop step trace and tunes PID gains.
    pub fn from_trace(trace: &Trace, closed_loop_tau: f64) -> Result<Self, HarnessError> {
        trace.check_uniform()?;
        let t = trace.column(|r| r.t);
        let u = trace.column(|r| r.gas_command);
        let y = trace.column(|r| r.dz_measured);
        let fit = fit_fopdt(&t, &u, &y)?;
        let gains = tune_pid_from_fopdt(&fit.params, closed_loop_tau)?;
        Ok(Self {
            fit,
            gains,
            closed_loop_tau,
        })
    }

    /// Default identification experiment: hold `dz0`, then step the command
    /// up by 25% at t = 1 s and record four more seconds.
    pub fn default_step(
        base: &Scenario,
        plant: &PlantParams,
        dz0: f64,
    ) -> Result<Scenario, HarnessError> {
        let geom = base.geometry_at(0.0);
        let (_, u0) = PlantState::steady(geom, dz0, plant);
        let mut s = Scenario {
            duration: 5.0,
            initial_dz: dz0,
            ..base.clone()
        };
        s.command = crate::plant::Waveform::new(vec![(0.0, [u0]), (1.0, [1.25 * u0])])?;
        s.target = Default::default();
        Ok(s)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        use super::fmt_g9;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "tau_p_s",
            "theta_s",
            "y0",
            "t_step_s",
            "du",
            "sse",
            "closed_loop_tau_s",
            "g_p",
            "ratio_i",
            "ratio_d",
            "filter_tau_s",
        ])?;
        let p = &self.fit.params;
        let g = &self.gains;
        w.write_record(
            [
                p.k,
                p.tau_p,
                p.theta,
                self.fit.y0,
                self.fit.t_step,
                self.fit.du,
                self.fit.sse,
                self.closed_loop_tau,
                g.g_p,
                g.ratio_i,
                g.ratio_d,
                g.filter_tau(),
            ]
            .map(fmt_g9),
        )?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Gains as configuration lines, bit-exact.
    pub fn gains_config(&self) -> String {
        let g = &self.gains;
        format!(
            "pid.g_p = {:?}\npid.ratio_i = {:?}\npid.ratio_d = {:?}\npid.filter_tau = {:?}\n",
            g.g_p,
            g.ratio_i,
            g.ratio_d,
            g.filter_tau()
        )
    }
}

/// Times preprocessing plus inference on `frame`, `reps` times.
pub fn measure_inference_latency(
    model: &LinearMap,
    frame: &Frame,
    reps: usize,
) -> Result<LatencyStats, HarnessError> {
    let mut times = Vec::with_capacity(reps);
    let mut sink = 0.0;
    for _ in 0..reps {
        let start = Instant::now();
        sink += measure(model, frame)?;
        times.push(start.elapsed());
    }
    std::hint::black_box(sink);
    Ok(LatencyStats::from_samples(times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryState;
    use crate::preprocess::Preprocessing;

    /// Reports a fixed height regardless of the frame.
    fn constant_model(setup: &FrameSetup) -> LinearMap {
        let (w, h) = setup.dims();
        LinearMap::new(w, h, vec![0.0; w * h], -1.1, Preprocessing::Base, 0.0).unwrap()
    }

    fn frame() -> FrameSetup {
        FrameSetup {
            width: 36,
            height: 24,
            ..FrameSetup::default()
        }
    }

    #[test]
    fn zero_gains_hold_rest() {
        let plant = PlantParams::default();
        let fs = frame();
        let model = constant_model(&fs);
        let mut sc = Scenario::headline();
        sc.initial_dz = 0.0;
        sc.duration = 2.0;
        let setup = LoopSetup {
            model: &model,
            gains: PidGains::zero(),
            dz: DzParams::default(),
            plant: &plant,
            frame: fs,
            limits: (0.0, 10.0),
        };
        let tr = run_closed_loop(&sc, &setup).unwrap();
        assert_eq!(tr.len(), 61);
        for r in &tr.rows {
            assert_eq!(r.gas_command, 0.0);
            assert_eq!(r.dz_true(), 0.0);
        }
        tr.check_uniform().unwrap();
    }

    #[test]
    fn closed_loop_is_deterministic() {
        let plant = PlantParams::default();
        let fs = frame();
        let model = constant_model(&fs);
        let mut sc = Scenario::headline();
        sc.duration = 1.0;
        sc.seed = 7;
        let setup = LoopSetup {
            model: &model,
            gains: PidGains::new(1.0, 2.0, 0.0, 0.04).unwrap(),
            dz: DzParams::default(),
            plant: &plant,
            frame: fs,
            limits: (0.0, 10.0),
        };
        let a = run_closed_loop(&sc, &setup).unwrap();
        let b = run_closed_loop(&sc, &setup).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_model_rejected() {
        let plant = PlantParams::default();
        let model = constant_model(&FrameSetup::default());
        let setup = LoopSetup {
            model: &model,
            gains: PidGains::zero(),
            dz: DzParams::default(),
            plant: &plant,
            frame: frame(),
            limits: (0.0, 10.0),
        };
        let e = run_closed_loop(&Scenario::headline(), &setup).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn open_loop_sysid_on_true_dz() {
        let plant = PlantParams::default();
        let base = Scenario::headline();
        let sc = SysidReport::default_step(&base, &plant, 0.2).unwrap();
        let tr = run_open_loop(&sc, &plant, &frame(), None, &DzParams::default()).unwrap();
        let rep = SysidReport::from_trace(&tr, 0.25).unwrap();
        let p = rep.fit.params;
        assert!((p.theta - plant.gas_dead_time).abs() < 0.05, "{p:?}");
        assert!(p.k > 0.0 && rep.gains.g_p > 0.0);
        let text = rep.gains_config();
        assert!(text.starts_with("pid.g_p = "));
    }

    #[test]
    fn open_loop_holds_without_schedule() {
        let plant = PlantParams::default();
        let mut sc = Scenario::default().finalized();
        sc.duration = 1.0;
        sc.initial_dz = 0.4;
        let tr = run_open_loop(&sc, &plant, &frame(), None, &DzParams::default()).unwrap();
        for r in &tr.rows {
            assert!((r.dz_true() - 0.4).abs() < 1e-12);
        }
        let g = GeometryState::default();
        assert_eq!(tr.rows[0].geometry(), g);
    }

    #[test]
    fn latency_stats_order() {
        let s = LatencyStats::from_samples((1..=100).map(Duration::from_micros).collect());
        assert_eq!(s.max, Duration::from_micros(100));
        assert_eq!(s.p99, Duration::from_micros(99));
        assert!(s.mean <= s.p99);
    }
}
