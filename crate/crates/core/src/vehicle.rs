//! Third-order longitudinal vehicle model used by the demo scenario.
//!
//! States are position, velocity and acceleration; the output is acceleration and the
//! input is the commanded acceleration passed through a first-order power-train lag `tau`
//! with engine gain `beta`.

use nalgebra::{dmatrix, DMatrix};

use crate::error::Result;
use crate::model::{discretize_zoh, ContinuousMode, ModeBank, StateSpaceMode};

pub const SAMPLE_PERIOD: f64 = 0.1;

/// Fast power train, strong engine.
pub const SPORTS_CAR: VehicleParams = VehicleParams {
    tau: 0.01,
    beta: 1.5,
};

/// Slow power train, weak engine.
pub const AVERAGE_CAR: VehicleParams = VehicleParams {
    tau: 0.6,
    beta: 0.7,
};

/// Gain placing the closed-loop poles of the discretized average car at `{0.1, 0.2, 0.3}`.
pub const POLE_PLACED_GAIN: [f64; 3] = [-468.99, -130.18, -13.40];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams {
    pub tau: f64,
    pub beta: f64,
}

impl VehicleParams {
    pub fn continuous(&self, sample_period: f64) -> Result<ContinuousMode> {
        let (tau, beta) = (self.tau, self.beta);
        ContinuousMode::new(
            dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, -1.0 / tau],
            dmatrix![0.0; 0.0; beta / tau],
            dmatrix![0.0, 0.0, 1.0],
            sample_period,
        )
    }

    pub fn discrete(&self, id: usize, sample_period: f64) -> Result<StateSpaceMode> {
        discretize_zoh(&self.continuous(sample_period)?, id)
    }
}

/// Mode 1 is the sports car, mode 2 the average car.
pub fn bank(sample_period: f64) -> Result<ModeBank> {
    ModeBank::new(vec![
        SPORTS_CAR.discrete(1, sample_period)?,
        AVERAGE_CAR.discrete(2, sample_period)?,
    ])
}

pub fn pole_placed_gain() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 3, &POLE_PLACED_GAIN)
}
