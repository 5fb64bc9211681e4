//! First-order-plus-dead-time models: simulation and step-test fitting.

use std::collections::VecDeque;

use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FopdtParams {
    pub k: f64,
    pub tau_p: f64,
    pub theta: f64,
}

impl FopdtParams {
    pub fn new(k: f64, tau_p: f64, theta: f64) -> Result<Self, ControlError> {
        if !(k.is_finite() && k != 0.0) {
            return Err(ControlError::InvalidPlant(format!("gain k = {k}")));
        }
        if !(tau_p.is_finite() && tau_p > 0.0) {
            return Err(ControlError::InvalidPlant(format!("tau_p = {tau_p}")));
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(ControlError::InvalidPlant(format!("theta = {theta}")));
        }
        Ok(Self { k, tau_p, theta })
    }

    /// Response to a step of size `du` at `t_step`, starting from `y0`.
    pub fn step_response(&self, t: f64, t_step: f64, y0: f64, du: f64) -> f64 {
        y0 + self.k * du * unit_response(t - t_step - self.theta, self.tau_p)
    }
}

fn unit_response(elapsed: f64, tau: f64) -> f64 {
    if elapsed <= 0.0 {
        0.0
    } else {
        -(-elapsed / tau).exp_m1()
    }
}

/// Delayed zero-order-hold command line.
///
/// A command issued at `t` holds until the next one and reaches the plant
/// `dead_time` seconds later.
#[derive(Debug, Clone)]
pub struct DelayLine {
    dead_time: f64,
    initial: f64,
    history: VecDeque<(f64, f64)>,
}

impl DelayLine {
    pub fn new(dead_time: f64, initial: f64) -> Self {
        Self {
            dead_time: dead_time.max(0.0),
            initial,
            history: VecDeque::new(),
        }
    }

    pub fn dead_time(&self) -> f64 {
        self.dead_time
    }

    pub fn push(&mut self, t: f64, command: f64) {
        self.history.push_back((t, command));
    }

    /// Command reaching the plant at time `t`.
    pub fn effective(&self, t: f64) -> f64 {
        let cutoff = t - self.dead_time;
        self.history
            .iter()
            .rev()
            .find(|(ti, _)| *ti <= cutoff)
            .map_or(self.initial, |&(_, u)| u)
    }

    /// Constant-command pieces `(duration, command)` covering `[t0, t1]`.
    /// Entries no longer needed after `t1` are dropped.
    pub fn segments(&mut self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2);
        let mut start = t0;
        let mut current = self.effective(t0);
        for &(ti, u) in &self.history {
            let arrive = ti + self.dead_time;
            if arrive > t0 && arrive < t1 {
                out.push((arrive - start, current));
                start = arrive;
                current = u;
            }
        }
        out.push((t1 - start, current));

        let cutoff = t1 - self.dead_time;
        while self.history.len() > 1 && self.history[1].0 <= cutoff {
            let (_, u) = self.history.pop_front().expect("len > 1");
            self.initial = u;
        }
        out
    }
}

/// Exact discrete simulation of an FOPDT plant under zero-order-hold input,
/// starting at steady state `y0` for command `u0`.
#[derive(Debug, Clone)]
pub struct FopdtSim {
    params: FopdtParams,
    y0: f64,
    u0: f64,
    deviation: f64,
    t: f64,
    delay: DelayLine,
}

impl FopdtSim {
    pub fn new(params: FopdtParams, y0: f64, u0: f64) -> Self {
        Self {
            params,
            y0,
            u0,
            deviation: 0.0,
            t: 0.0,
            delay: DelayLine::new(params.theta, u0),
        }
    }

    pub fn output(&self) -> f64 {
        self.y0 + self.deviation
    }

    /// Issues `command` now and advances by `dt`; returns the new output.
    pub fn step(&mut self, command: f64, dt: f64) -> f64 {
        self.delay.push(self.t, command);
        let t1 = self.t + dt;
        for (d, u) in self.delay.segments(self.t, t1) {
            let target = self.params.k * (u - self.u0);
            self.deviation = target + (self.deviation - target) * (-d / self.params.tau_p).exp();
        }
        self.t = t1;
        self.output()
    }
}

#[derive(Debug, Clone)]
pub struct FopdtFit {
    pub params: FopdtParams,
    pub y0: f64,
    pub t_step: f64,
    pub du: f64,
    /// Sum of squared residuals over the post-step samples.
    pub sse: f64,
}

struct StepProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    t_step: f64,
    y0: f64,
    du: f64,
}

impl StepProblem<'_> {
    /// Best `k` for fixed `(tau, theta)` and the resulting SSE.
    fn profile(&self, tau: f64, theta: f64) -> (f64, f64) {
        let mut sgy = 0.0;
        let mut sgg = 0.0;
        for (&t, &y) in self.t.iter().zip(self.y) {
            let g = self.du * unit_response(t - self.t_step - theta, tau);
            sgy += g * (y - self.y0);
            sgg += g * g;
        }
        let k = if sgg > 0.0 { sgy / sgg } else { 0.0 };
        let sse = self
            .t
            .iter()
            .zip(self.y)
            .map(|(&t, &y)| {
                let r = y - self.y0 - k * self.du * unit_response(t - self.t_step - theta, tau);
                r * r
            })
            .sum();
        (k, sse)
    }
}

fn golden_section(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Fits `(k, tau_p, theta)` to a single command step.
///
/// `y0` is the mean of the pre-step samples and the step size is read from
/// the command. A grid over `(tau, theta)` seeds a coordinate descent that
/// alternates golden-section searches in `theta` and `log(tau)`; `k` is
/// solved in closed form at every evaluation. Descent stops once a full
/// sweep improves the squared error by less than `1e-10`.
pub fn fit_fopdt(t: &[f64], command: &[f64], y: &[f64]) -> Result<FopdtFit, ControlError> {
    if t.len() != command.len() || t.len() != y.len() {
        return Err(ControlError::LengthMismatch);
    }
    if t.len() < 4 {
        return Err(ControlError::NoStepFound);
    }
    if t.iter().chain(command).chain(y).any(|v| !v.is_finite()) {
        return Err(ControlError::NonFinite);
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(ControlError::NonUniformSampling);
    }
    let scale = command.iter().fold(1.0f64, |m, u| m.max(u.abs()));
    let steps: Vec<usize> = (1..command.len())
        .filter(|&i| (command[i] - command[i - 1]).abs() > 1e-12 * scale)
        .collect();
    let i_s = match steps.as_slice() {
        [] => return Err(ControlError::NoStepFound),
        [i] => *i,
        _ => return Err(ControlError::MultipleSteps(steps.len())),
    };
    let du = command[i_s] - command[i_s - 1];
    let y0 = y[..i_s].iter().sum::<f64>() / i_s as f64;
    let t_step = t[i_s];
    let problem = StepProblem {
        t: &t[i_s..],
        y: &y[i_s..],
        t_step,
        y0,
        du,
    };
    let span = t[t.len() - 1] - t_step;
    if span <= 2.0 * dt {
        return Err(ControlError::NoStepFound);
    }

    const N_THETA: usize = 40;
    const N_TAU: usize = 40;
    let theta_max = 0.5 * span;
    let (tau_lo, tau_hi) = ((0.25 * dt).ln(), span.ln());
    let theta_h = theta_max / N_THETA as f64;
    let ltau_h = (tau_hi - tau_lo) / N_TAU as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=N_THETA {
        let theta = i as f64 * theta_h;
        for j in 0..=N_TAU {
            let lt = tau_lo + j as f64 * ltau_h;
            let (_, sse) = problem.profile(lt.exp(), theta);
            if sse < best.0 {
                best = (sse, theta, lt);
            }
        }
    }

    let (mut sse, mut theta, mut ltau) = best;
    for _ in 0..500 {
        let prev = sse;
        theta = golden_section((theta - theta_h).max(0.0), theta + theta_h, 1e-12, |th| {
            problem.profile(ltau.exp(), th).1
        });
        ltau = golden_section(ltau - ltau_h, ltau + ltau_h, 1e-12, |lt| {
            problem.profile(lt.exp(), theta).1
        });
        sse = problem.profile(ltau.exp(), theta).1;
        if prev - sse < 1e-10 {
            break;
        }
    }
    if sse > best.0 {
        (_, theta, ltau) = best;
    }
    let (k, sse) = problem.profile(ltau.exp(), theta);
    let params = FopdtParams::new(k, ltau.exp(), theta).map_err(|_| ControlError::NoStepFound)?;
    Ok(FopdtFit {
        params,
        y0,
        t_step,
        du,
        sse,
    })
}
