//! PID regulation of DZ and first-order-plus-dead-time plant identification.

mod fopdt;
mod pid;
mod tune;

use thiserror::Error;

pub use fopdt::{fit_fopdt, DelayLine, FopdtFit, FopdtParams, FopdtSim};
pub use pid::{low_pass, pid_step, ControllerState, PidGains};
pub use tune::{imc_gains, step_check, tune_pid_from_fopdt, TUNED_FILTER_TAU};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("filter time constant must be finite and >= 0, got {0}")]
    InvalidFilterTau(f64),
    #[error("gains must be finite")]
    NonFiniteGain,
    #[error("command limits ({0}, {1}) are not an ordered finite pair")]
    InvalidLimits(f64, f64),
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("closed-loop time constant must be positive, got {0}")]
    InvalidClosedLoopTau(f64),
    #[error("no command step found in the record")]
    NoStepFound,
    #[error("record contains {0} command steps, expected one")]
    MultipleSteps(usize),
    #[error("record is not uniformly sampled")]
    NonUniformSampling,
    #[error("time, command and response columns differ in length")]
    LengthMismatch,
    #[error("record contains non-finite values")]
    NonFinite,
    #[error("tuned gains failed the closed-loop stability check")]
    UnstableResult,
}
