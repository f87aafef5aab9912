// The full vehicle scenario: the sports car is made to look like the average car while the
// mean acceleration over the window is preserved.

use behavior_cloak::scenario::{run_vehicle_demo, DemoConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DemoConfig::default();
    let demo = run_vehicle_demo(&cfg)?;
    println!("K = {}", cfg.horizon);
    println!("max |ybar1 - y|      = {:.3e}", demo.regulation_error());
    println!("|Ybar - Y|           = {:.6}", demo.distorted.stacked_delta_y().norm());
    println!("mean(Y), mean(Ybar)  = {:.10}, {:.10}", demo.original_utility()?[0], demo.distorted_utility()?[0]);
    println!("verdict original     = {}", demo.original_report.verdict);
    println!("verdict distorted    = {}", demo.distorted_report.verdict);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
