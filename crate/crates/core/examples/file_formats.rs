// Writing and reading the bank, trajectory, plan and controller files used by the CLI.

use behavior_cloak::invariance::build_lifted_operators;
use behavior_cloak::io::{self, ControllerFile, PlanFile};
use behavior_cloak::numerics::ToleranceConfig;
use behavior_cloak::scenario::{run_vehicle_demo, DemoConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    let demo = run_vehicle_demo(&DemoConfig {
        horizon: 40,
        ..DemoConfig::default()
    })?;
    let dir = std::env::temp_dir().join(format!("behavior-cloak-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    io::write_bank(&dir.join("bank.json"), &demo.bank)?;
    io::write_trajectory(&dir.join("original.csv"), &demo.original)?;
    io::write_json(&dir.join("plan.json"), &PlanFile::from_plan(&demo.design.plan))?;
    io::write_json(&dir.join("controller.json"), &ControllerFile::from_controller(&demo.design.controller))?;

    let bank = io::read_bank(&dir.join("bank.json"))?;
    let traj = io::read_trajectory(&dir.join("original.csv"))?;
    let ops = build_lifted_operators(bank.require(2)?, traj.horizon())?;
    let plan = io::read_json::<PlanFile>(&dir.join("plan.json"))?.to_plan(&ops, &demo.spec, &tol)?;
    let ctrl = io::read_json::<ControllerFile>(&dir.join("controller.json"))?.to_controller(&bank, &tol)?;

    println!("{}", std::fs::read_to_string(dir.join("original.csv"))?.lines().take(3).collect::<Vec<_>>().join("\n"));
    println!("reloaded plan |dY| = {:.6}, controller S = {:.4}", plan.delta_y.norm(), ctrl.s());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
