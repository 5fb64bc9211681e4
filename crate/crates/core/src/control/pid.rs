use super::ControlError;

/// First-order low-pass: `prev + dt/(tau + dt) * (raw - prev)`.
pub fn low_pass(prev: f64, raw: f64, dt: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return raw;
    }
    prev + dt / (tau + dt) * (raw - prev)
}

/// `command = g_p * (e + ratio_i * integral(e) + ratio_d * d/dt(-filtered))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub g_p: f64,
    pub ratio_i: f64,
    pub ratio_d: f64,
    filter_tau: f64,
}

impl PidGains {
    pub fn new(
        g_p: f64,
        ratio_i: f64,
        ratio_d: f64,
        filter_tau: f64,
    ) -> Result<Self, ControlError> {
        if !(filter_tau.is_finite() && filter_tau >= 0.0) {
            return Err(ControlError::InvalidFilterTau(filter_tau));
        }
        if !(g_p.is_finite() && ratio_i.is_finite() && ratio_d.is_finite()) {
            return Err(ControlError::NonFiniteGain);
        }
        Ok(Self {
            g_p,
            ratio_i,
            ratio_d,
            filter_tau,
        })
    }

    pub fn zero() -> Self {
        Self {
            g_p: 0.0,
            ratio_i: 0.0,
            ratio_d: 0.0,
            filter_tau: 0.0,
        }
    }

    /// Reference gains: negative proportional sign, 40 ms measurement
    /// filter. The sign suits a plant whose DZ falls with more command.
    pub fn reference() -> Self {
        Self {
            g_p: -1.0,
            ratio_i: 5.0,
            ratio_d: 250.0,
            filter_tau: 0.04,
        }
    }

    pub fn filter_tau(&self) -> f64 {
        self.filter_tau
    }

    pub fn with_filter_tau(self, filter_tau: f64) -> Self {
        Self {
            filter_tau: filter_tau.max(0.0),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub integral: f64,
    /// `None` until the first measurement primes the filter.
    pub filtered_meas: Option<f64>,
    pub last_filtered_meas: f64,
    last_error: f64,
    command_limits: (f64, f64),
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new((0.0, 10.0)).expect("default limits are ordered")
    }
}

impl ControllerState {
    pub fn new(command_limits: (f64, f64)) -> Result<Self, ControlError> {
        let (lo, hi) = command_limits;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ControlError::InvalidLimits(lo, hi));
        }
        Ok(Self {
            integral: 0.0,
            filtered_meas: None,
            last_filtered_meas: 0.0,
            last_error: 0.0,
            command_limits,
        })
    }

    pub fn command_limits(&self) -> (f64, f64) {
        self.command_limits
    }

    /// Bumpless start: sets the integral so that, at zero error, the
    /// controller outputs `command`. No-op without integral action.
    pub fn preload(&mut self, gains: &PidGains, command: f64) {
        let ki = gains.g_p * gains.ratio_i;
        if ki != 0.0 {
            self.integral = self.clamp(command) / ki;
        }
    }

    fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.command_limits.0, self.command_limits.1)
    }
}

/// One controller update. The first call primes the filter with the raw
/// measurement, so it produces no derivative kick.
///
/// Anti-windup is two-fold: the integral does not grow while the output is
/// already saturated in the direction the increment would push, and the integral contribution
/// on its own is kept inside the command limits.
pub fn pid_step(
    state: &mut ControllerState,
    gains: &PidGains,
    target: f64,
    measurement: f64,
    dt: f64,
) -> Result<f64, ControlError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::NonPositiveDt(dt));
    }
    let (filtered, previous, prev_error) = match state.filtered_meas {
        None => (measurement, measurement, target - measurement),
        Some(f) => (
            low_pass(f, measurement, dt, gains.filter_tau),
            f,
            state.last_error,
        ),
    };
    let error = target - filtered;
    let derivative = -(filtered - previous) / dt;
    let ki = gains.g_p * gains.ratio_i;

    let mut integral = state.integral;
    if ki != 0.0 {
        let increment = 0.5 * (error + prev_error) * dt;
        let (lo, hi) = state.command_limits;
        let held = gains.g_p * (error + gains.ratio_i * integral + gains.ratio_d * derivative);
        let push = ki * increment;
        let winding = (held >= hi && push > 0.0) || (held <= lo && push < 0.0);
        if !winding {
            integral += increment;
        }
        let (a, b) = (lo / ki, hi / ki);
        integral = integral.clamp(a.min(b), a.max(b));
    }

    let raw = gains.g_p * (error + gains.ratio_i * integral + gains.ratio_d * derivative);
    state.integral = integral;
    state.last_filtered_meas = previous;
    state.filtered_meas = Some(filtered);
    state.last_error = error;
    Ok(state.clamp(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filter_limits() {
        assert_eq!(low_pass(0.3, 0.9, 0.1, 0.0), 0.9);
        assert_eq!(low_pass(0.7, 0.7, 0.1, 0.04), 0.7);
    }

    #[test]
    fn filter_step_at_frame_rate() {
        // Step applied at t = 0; samples at t = 0 and t = 1/30 both lie within tau.
        let (dt, tau) = (1.0 / 30.0, 0.04);
        let mut y = 0.0;
        let mut t = 0.0;
        while t <= tau + 1e-12 {
            y = low_pass(y, 1.0, dt, tau);
            t += dt;
        }
        assert!(y >= 1.0 - (-1.0f64).exp(), "{y}");
    }

    #[test]
    fn filter_step_fine_grid() {
        let (dt, tau) = (1e-4, 0.04);
        let mut y = 0.0;
        for _ in 0..400 {
            y = low_pass(y, 1.0, dt, tau);
        }
        assert!(y >= 0.63, "{y}");
    }

    #[test]
    fn proportional_law() {
        let g = PidGains::new(-1.0, 0.0, 0.0, 0.0).unwrap();
        let mut s = ControllerState::new((-10.0, 10.0)).unwrap();
        let u = pid_step(&mut s, &g, 0.6, 0.5, 1.0 / 30.0).unwrap();
        assert!((u + 0.1).abs() < 1e-15);
        let mut s = ControllerState::default();
        assert_eq!(pid_step(&mut s, &g, 0.6, 0.5, 1.0 / 30.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_error_from_rest() {
        let g = PidGains::new(2.0, 5.0, 0.3, 0.04).unwrap();
        let mut s = ControllerState::new((-1.0, 1.0)).unwrap();
        for _ in 0..100 {
            assert_eq!(pid_step(&mut s, &g, 0.4, 0.4, 0.01).unwrap(), 0.0);
        }
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn preload_is_bumpless() {
        let g = PidGains::new(2.0, 4.0, 0.3, 0.04).unwrap();
        let mut s = ControllerState::default();
        s.preload(&g, 3.5);
        for _ in 0..10 {
            assert!((pid_step(&mut s, &g, 0.4, 0.4, 1.0 / 30.0).unwrap() - 3.5).abs() < 1e-12);
        }
        let mut z = ControllerState::default();
        z.preload(&PidGains::zero(), 3.5);
        assert_eq!(z.integral, 0.0);
    }

    #[test]
    fn rejects_bad_dt() {
        let mut s = ControllerState::default();
        let g = PidGains::zero();
        assert!(matches!(
            pid_step(&mut s, &g, 0.0, 0.0, 0.0),
            Err(ControlError::NonPositiveDt(_))
        ));
        assert!(pid_step(&mut s, &g, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn windup_bounded_under_unreachable_target() {
        let g = PidGains::new(1.5, 5.0, 0.1, 0.04).unwrap();
        let mut s = ControllerState::default();
        let bound = 10.0 / (1.5 * 5.0);
        for i in 0..100_000 {
            let u = pid_step(&mut s, &g, 5.0, 0.0, 1.0 / 30.0).unwrap();
            if i > 0 {
                assert_eq!(u, 10.0);
            }
            assert!(s.integral.abs() <= bound + 1e-12);
        }
        // Recovery: once the target is reachable the output leaves saturation quickly.
        let mut ticks = 0;
        while pid_step(&mut s, &g, 0.0, 1.0, 1.0 / 30.0).unwrap() > 0.0 {
            ticks += 1;
            assert!(ticks < 120);
        }
    }

    #[test]
    fn derivative_acts_on_measurement() {
        let g = PidGains::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let mut s = ControllerState::new((-100.0, 100.0)).unwrap();
        pid_step(&mut s, &g, 0.0, 0.0, 0.1).unwrap();
        // A target jump changes only the proportional term.
        assert!((pid_step(&mut s, &g, 1.0, 0.0, 0.1).unwrap() - 1.0).abs() < 1e-15);
        // A measurement jump adds -(dmeas/dt) * ratio_d.
        let u = pid_step(&mut s, &g, 1.0, 0.5, 0.1).unwrap();
        assert!((u - (0.5 - 5.0)).abs() < 1e-12, "{u}");
    }

    proptest! {
        #[test]
        fn zero_gains_give_clamped_zero(target in -2.0f64..2.0, meas in -2.0f64..2.0, lo in -5.0f64..5.0, width in 0.0f64..5.0) {
            let mut s = ControllerState::new((lo, lo + width)).unwrap();
            let g = PidGains::zero();
            for _ in 0..5 {
                prop_assert_eq!(pid_step(&mut s, &g, target, meas, 0.03).unwrap(), 0.0f64.clamp(lo, lo + width));
            }
        }

        #[test]
        fn deterministic(seq in proptest::collection::vec((-1.0f64..2.0, -1.0f64..2.0), 1..50)) {
            let g = PidGains::new(0.8, 3.0, 0.2, 0.04).unwrap();
            let mut a = ControllerState::default();
            let mut b = ControllerState::default();
            for (t, m) in seq {
                let ua = pid_step(&mut a, &g, t, m, 1.0 / 30.0).unwrap();
                let ub = pid_step(&mut b, &g, t, m, 1.0 / 30.0).unwrap();
                prop_assert_eq!(ua.to_bits(), ub.to_bits());
            }
        }
    }
}
