//! Learning variable-impedance Cartesian skills from demonstrations.
//!
//! The crate covers the full path from raw demonstration files to a validated
//! skill:
//!
//! 1. [`preprocess`] — load demonstration CSVs and align them onto a common
//!    uniform clock.
//! 2. [`gmm`] — model the pooled trajectories as a Gaussian mixture and
//!    regress a mean trajectory with per-axis spread.
//! 3. [`stiffness`] — turn spread into per-axis stiffness profiles (agreement
//!    means stiff, disagreement means compliant).
//! 4. [`dmp`] — encode mean pose and stiffness trajectories in a dynamic
//!    movement primitive that generalizes to new goals and durations.
//! 5. [`vic`] — validate closed-loop behavior with a Cartesian impedance
//!    controller driving a simulated rigid body.
//!
//! [`pipeline`] wires the stages together and [`bundle`] persists the result;
//! [`synthetic`] generates deterministic demonstration sets for tests and
//! examples.

pub mod bundle;
pub mod dmp;
pub mod error;
pub mod gmm;
pub mod pipeline;
pub mod preprocess;
pub mod quaternion;
pub mod stiffness;
pub mod synthetic;
pub mod vic;

pub use bundle::{ModelLayout, PipelineConfig, SkillBundle, VarianceSource};
pub use dmp::{DmpModel, Gains, GoalOverride, Trajectory};
pub use error::{Error, Result};
pub use gmm::TrajectoryDistribution;
pub use preprocess::{AlignedDataset, Demonstration, Sample};
pub use quaternion::UnitQuaternion;
pub use stiffness::{AxisBounds, StiffnessBounds, StiffnessProfile};
pub use vic::{Disturbance, Pose, SimBody, SimOptions, SimTrace, Twist, Wrench};
