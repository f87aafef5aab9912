// Off-line plan whose output changes every sample but leaves the mean untouched.

use behavior_cloak::invariance::{build_lifted_operators, solve_utility_invariance, UtilitySpec};
use behavior_cloak::numerics::ToleranceConfig;
use behavior_cloak::vehicle;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    let bank = vehicle::bank(vehicle::SAMPLE_PERIOD)?;
    let horizon = 200;
    let ops = build_lifted_operators(bank.require(2)?, horizon)?;
    let spec = UtilitySpec::average(horizon, 1, &tol)?;

    let plan = solve_utility_invariance(&ops, &spec, 1.0, 7, &tol)?;
    println!("|dY| = {:.6}", plan.delta_y.norm());
    println!("F dY = {:.3e}", (spec.f() * &plan.delta_y)[0]);
    println!("plan residual = {:.3e}", plan.residual);
    println!("first outputs: {:.4?}", &plan.delta_y.as_slice()[..5]);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
