// Behaviour residuals of original and distorted trajectories against both vehicle modes.

use behavior_cloak::adversary::{classify, mode_residual, DEFAULT_ACCEPT_TOL};
use behavior_cloak::model::Trajectory;
use behavior_cloak::scenario::{run_vehicle_demo, DemoConfig};
use nalgebra::DVector;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let demo = run_vehicle_demo(&DemoConfig {
        horizon: 120,
        ..DemoConfig::default()
    })?;
    let distorted = demo.distorted.to_trajectory()?;
    for (name, traj) in [("original", &demo.original), ("distorted", &distorted)] {
        let report = classify(&demo.bank, traj, DEFAULT_ACCEPT_TOL)?;
        println!("{name:>9}: {}", serde_json::to_string(&report)?);
    }

    // the zero trajectory lies in every behaviour
    let zero = Trajectory::new(vec![DVector::zeros(1); 9], vec![DVector::zeros(1); 10], None)?;
    println!("     zero: {}", classify(&demo.bank, &zero, DEFAULT_ACCEPT_TOL)?.verdict);
    println!("mode 2 residual of the original: {:.4}", mode_residual(demo.bank.require(2)?, &demo.original)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
