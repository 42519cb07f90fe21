//! Value iteration networks on multiple levels of abstraction.
//!
//! The crate covers the whole pipeline: grid-world and maze generation,
//! point-agent and wheeled-footprint kinematics, an A* expert, a small
//! reverse-mode differentiation engine, the VIN / HVIN / AVIN planners built
//! on top of it, imitation training and rollout evaluation.

pub mod autodiff;
pub mod env;
pub mod error;
pub mod expert;
pub mod models;
pub mod optim;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, OrientationMode, Var};
pub use env::{Action, Domain, Footprint, GridWorld, PlanningTask, Pose, Sample, SampleSource};
pub use error::{Error, Result};
pub use expert::{CostModel, Path};
pub use models::{Checkpoint, Model, ModelConfig, ModelKind};
pub use optim::{LrSchedule, ParamStore, Parameter, RmsProp};
pub use tensor::{Scalar, Tensor};
pub use train::{EvalReport, RolloutResult, TrainConfig};
