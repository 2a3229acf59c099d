//! Fixtures shared by the benchmarks.

use twinsync_core::robot_model::{parse_urdf, RobotModel};
use twinsync_core::scenario::PANDA_URDF;
use twinsync_core::transport::TelemetryPacket;

pub fn panda() -> RobotModel {
    parse_urdf(PANDA_URDF).expect("bundled model parses")
}

/// Ready pose plus open fingers.
pub fn panda_ready() -> Vec<f64> {
    vec![0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785, 0.04, 0.04]
}

pub fn telemetry(seq: u32, dof: usize) -> TelemetryPacket {
    TelemetryPacket {
        robot_id: 1,
        seq,
        time_ns: seq as u64 * 16_666_667,
        positions: (0..dof).map(|i| 0.1 * i as f64).collect(),
        velocities: vec![0.01; dof],
        efforts: vec![0.5; dof],
        gripper_width: 0.08,
        gripper_velocity: 0.0,
    }
}
