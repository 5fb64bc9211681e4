//! Camera-based divertor detachment control: labeling, linear inference,
//! the DZ metric, a PID loop and a simulated plant to close it around.

pub mod control;
pub mod dzmetric;
pub mod frame;
pub mod geometry;
pub mod harness;
pub mod labeling;
pub mod linmodel;
pub mod plant;
pub mod preprocess;
