//! Fixed observation scaling between the environment and the learners.
//!
//! Raw window frames mix radians, newton-meters, and meters; the scaler
//! normalizes each component by a constant derived from the robot model and
//! the reward band so no channel dominates the features.

use crate::kinematics::RobotModel;

#[derive(Debug, Clone)]
pub struct ObsScaler {
    frame_scale: Vec<f64>,
}

impl ObsScaler {
    pub fn new(robot: &RobotModel, band_high: f64) -> Self {
        let mut frame_scale = Vec::new();
        for j in &robot.joints {
            frame_scale.push(1.0 / j.q_min.abs().max(j.q_max.abs()).max(1e-6));
        }
        for j in &robot.joints {
            frame_scale.push(1.0 / j.torque_limit);
        }
        // Rotation entries are already O(1); translations stay in meters.
        frame_scale.extend(std::iter::repeat(1.0).take(12));
        frame_scale.push(1.0 / band_high.max(1e-6));
        ObsScaler { frame_scale }
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_scale.len()
    }

    /// Scale a flattened window (any whole number of frames).
    pub fn apply(&self, flat: &[f32]) -> Vec<f64> {
        debug_assert_eq!(flat.len() % self.frame_scale.len(), 0);
        flat.iter()
            .enumerate()
            .map(|(i, v)| *v as f64 * self.frame_scale[i % self.frame_scale.len()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_is_per_component_and_tiled() {
        let robot = RobotModel::planar_3dof([0.4, 0.35, 0.25]);
        let scaler = ObsScaler::new(&robot, 0.8);
        let dim = scaler.frame_dim();
        assert_eq!(dim, 2 * 3 + 13);
        let flat = vec![1.0_f32; dim * 2];
        let scaled = scaler.apply(&flat);
        assert_eq!(scaled.len(), dim * 2);
        // Same position in consecutive frames gets the same scale.
        for i in 0..dim {
            assert_eq!(scaled[i], scaled[dim + i]);
        }
        // Torque components are shrunk by the torque limit.
        assert!((scaled[3] - 1.0 / 60.0).abs() < 1e-12);
        // Velocity component scaled by the band edge.
        assert!((scaled[dim - 1] - 1.25).abs() < 1e-12);
    }
}
