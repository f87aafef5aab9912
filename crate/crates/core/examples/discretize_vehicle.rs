// Zero-order-hold discretization of the two vehicle power trains and their rank checks.

use behavior_cloak::model::validate_mode;
use behavior_cloak::numerics::ToleranceConfig;
use behavior_cloak::vehicle::{self, AVERAGE_CAR, SPORTS_CAR};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    for (name, params, id) in [("sports", SPORTS_CAR, 1), ("average", AVERAGE_CAR, 2)] {
        let mode = params.discrete(id, vehicle::SAMPLE_PERIOD)?;
        println!("{name} car (tau = {}, beta = {})", params.tau, params.beta);
        println!("A = {:.4}B = {:.4}", mode.a(), mode.b());
        let report = validate_mode(&mode, &tol)?;
        for check in &report.checks {
            println!("  {:<22} rank {} of {} -> {}", check.name, check.rank, check.required, check.passed);
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
