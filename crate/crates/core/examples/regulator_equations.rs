// Solve the regulator equations that let the average car reproduce the sports car's output.

use behavior_cloak::numerics::ToleranceConfig;
use behavior_cloak::regulation::{regulator_residual, solve_regulator_equations};
use behavior_cloak::vehicle;
use nalgebra::dmatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    let bank = vehicle::bank(vehicle::SAMPLE_PERIOD)?;
    let (sports, average) = (bank.require(1)?, bank.require(2)?);

    let sol = solve_regulator_equations(sports, average, &tol)?;
    println!("Pi = {:.6}Gamma = {:.6}Theta = {:.6}", sol.pi, sol.gamma, sol.theta);
    println!("residual = {:.3e}", sol.residual);

    // four-digit values, as one would copy them from a printout
    let pi = dmatrix![1.0, -0.0386, 0.0011; 0.0, 1.0, -0.0386; 0.0, 0.0, 1.0];
    let gamma = dmatrix![0.0, 0.0, -7.8766];
    let theta = dmatrix![13.95];
    let rounded = regulator_residual(sports, average, &pi, &gamma, &theta)?;
    println!("residual of rounded values = {rounded:.3e}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
