use super::{pid_step, ControlError, ControllerState, FopdtParams, FopdtSim, PidGains};

/// Filter time constant attached to tuned gains.
pub const TUNED_FILTER_TAU: f64 = 0.04;

/// Sample period of the internal stability check.
const CHECK_DT: f64 = 1.0 / 30.0;

/// Internal-model-control PID rule for an FOPDT plant:
///
/// * `g_p = tau_p / (k (closed_loop_tau + theta))`, so its sign follows `k`
/// * `ratio_i = 1 / tau_p`
/// * `ratio_d = tau_p theta / (2 tau_p + theta)`
///
/// The gains are accepted only if a unit setpoint step on the plant itself,
/// sampled at 30 Hz with the tuned filter, settles to within 5%.
pub fn tune_pid_from_fopdt(
    plant: &FopdtParams,
    closed_loop_tau: f64,
) -> Result<PidGains, ControlError> {
    let plant = FopdtParams::new(plant.k, plant.tau_p, plant.theta)?;
    if !(closed_loop_tau.is_finite() && closed_loop_tau > 0.0) {
        return Err(ControlError::InvalidClosedLoopTau(closed_loop_tau));
    }
    let gains = imc_gains(&plant, closed_loop_tau);
    let response = step_check(&plant, &gains, 1.0)?;
    let tail = &response[response.len() * 3 / 4..];
    if !tail.iter().all(|y| (y - 1.0).abs() <= 0.05) {
        return Err(ControlError::UnstableResult);
    }
    Ok(gains)
}

pub fn imc_gains(plant: &FopdtParams, closed_loop_tau: f64) -> PidGains {
    let FopdtParams { k, tau_p, theta } = *plant;
    let mut g = PidGains::zero().with_filter_tau(TUNED_FILTER_TAU);
    g.g_p = tau_p / (k * (closed_loop_tau + theta));
    g.ratio_i = 1.0 / tau_p;
    g.ratio_d = tau_p * theta / (2.0 * tau_p + theta);
    g
}

/// Closed-loop response of the FOPDT plant to a setpoint step from 0 to
/// `target`, with effectively unlimited actuation.
pub fn step_check(
    plant: &FopdtParams,
    gains: &PidGains,
    target: f64,
) -> Result<Vec<f64>, ControlError> {
    let horizon = (20.0 * (plant.tau_p + plant.theta)).max(10.0);
    let n = (horizon / CHECK_DT).ceil() as usize;
    let mut sim = FopdtSim::new(*plant, 0.0, 0.0);
    let mut state = ControllerState::new((-1e9, 1e9))?;
    let mut out = Vec::with_capacity(n);
    let mut y = sim.output();
    for _ in 0..n {
        let u = pid_step(&mut state, gains, target, y, CHECK_DT)?;
        y = sim.step(u, CHECK_DT);
        if !y.is_finite() || y.abs() > 1e6 * target.abs().max(1.0) {
            return Err(ControlError::UnstableResult);
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dead_time_limit() {
        let g = imc_gains(&FopdtParams::new(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(g.g_p, 1.0);
        assert_eq!(g.ratio_i, 1.0);
        assert_eq!(g.ratio_d, 0.0);
        assert!(tune_pid_from_fopdt(&FopdtParams::new(1.0, 1.0, 0.0).unwrap(), 1.0).is_ok());
    }

    #[test]
    fn gain_homogeneity() {
        let a = imc_gains(&FopdtParams::new(1.3, 0.4, 0.2).unwrap(), 0.5);
        let b = imc_gains(&FopdtParams::new(2.6, 0.4, 0.2).unwrap(), 0.5);
        assert!((a.g_p - 2.0 * b.g_p).abs() < 1e-15);
        assert_eq!((a.ratio_i, a.ratio_d), (b.ratio_i, b.ratio_d));
        let c = imc_gains(&FopdtParams::new(-1.3, 0.4, 0.2).unwrap(), 0.5);
        assert!(c.g_p < 0.0);
    }

    #[test]
    fn tuned_loop_settles_without_large_overshoot() {
        let plant = FopdtParams::new(2.0, 0.3, 0.2).unwrap();
        let g = tune_pid_from_fopdt(&plant, 0.3).unwrap();
        let y = step_check(&plant, &g, 0.5).unwrap();
        let peak = y.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak <= 0.5 * 1.25, "overshoot: peak {peak}");
        let settle = (3.0 / CHECK_DT) as usize;
        assert!(y[settle..].iter().all(|v| (v - 0.5).abs() <= 0.025));
    }

    #[test]
    fn tuned_gains_pass_for_a_range_of_plants() {
        for &(k, tau, theta) in &[
            (0.2, 0.3, 0.2),
            (5.0, 1.0, 0.05),
            (-1.0, 0.5, 0.3),
            (0.8, 2.0, 0.0),
        ] {
            let p = FopdtParams::new(k, tau, theta).unwrap();
            let lam = tau.max(theta);
            assert!(tune_pid_from_fopdt(&p, lam).is_ok(), "{p:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = FopdtParams::new(1.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            tune_pid_from_fopdt(&p, 0.0),
            Err(ControlError::InvalidClosedLoopTau(_))
        ));
        let bad = FopdtParams {
            k: 1.0,
            tau_p: -1.0,
            theta: 0.0,
        };
        assert!(matches!(
            tune_pid_from_fopdt(&bad, 1.0),
            Err(ControlError::InvalidPlant(_))
        ));
    }
}
