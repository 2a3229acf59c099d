//! Digital-twin synchronization for a teleoperated cobot cell: robot model
//! mirroring, the twin-bound wire protocol, mocap filtering, grasp
//! tracking, prohibited zones, staged latency measurement and
//! record/replay, plus an emulated and a live harness around them.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod grasp;
pub mod latency;
pub mod live;
pub mod mocap;
pub mod pose;
pub mod replay;
pub mod robot_model;
pub mod scenario;
pub mod sim;
pub mod teleop;
pub mod transport;
pub mod twin;
pub mod zones;

pub use grasp::{AssetSource, GraspConfig, GraspPhase};
pub use latency::{DeltaKind, LatencyStats, Stage};
pub use mocap::{FilterConfig, FilteredPose};
pub use pose::Pose;
pub use replay::{LogRecord, ReplayLog};
pub use robot_model::{JointState, RobotModel};
pub use scenario::ScenarioConfig;
pub use teleop::{ControllerGains, FollowerState};
pub use transport::{CommandFrame, LinkConfig, MocapPacket, TelemetryPacket};
pub use twin::{TwinEngine, TwinState};
pub use zones::ProhibitedZone;
