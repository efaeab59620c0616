#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod error;
pub mod kernels;
pub mod ksos;
pub mod mppi;
pub mod optimizer;
pub mod problems;
pub mod random;
pub mod scalar;
pub mod sdp;
pub mod smoothing;

pub use error::{Error, Result};
pub use scalar::Real;

pub use optimizer::{run, solve, Ablation, GlobalMppiConfig, Method, RunTrace};
pub use problems::{problem_by_name, problem_names, Problem};

/// `f64` instantiations of the generic types.
pub type Bounds = problems::Bounds<f64>;
pub type KernelSpec = kernels::KernelSpec<f64>;
pub type SampleSet = ksos::SampleSet<f64>;
pub type SurrogateModel = ksos::SurrogateModel<f64>;
pub type Candidate = ksos::Candidate<f64>;
pub type KsosSolution = sdp::KsosSolution<f64>;
pub type LseConfig = smoothing::LseConfig<f64>;
pub type MppiConfig = mppi::MppiConfig<f64>;
pub type Temperature = mppi::Temperature<f64>;
pub type CalibrationConfig = calibration::CalibrationConfig<f64>;
pub type Calibration = calibration::Calibration<f64>;
pub type GncSchedule = optimizer::GncSchedule<f64>;
pub type Solution = optimizer::Solution<f64>;
