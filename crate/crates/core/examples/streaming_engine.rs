// Sample-by-sample distortion without access to the true state.
//
// The engine withholds the first `n - 1` samples while it reconstructs the state, so the
// recording is `n - 1` samples longer than the emitted window.

use behavior_cloak::engine::{init_engine, StepOutcome};
use behavior_cloak::invariance::{PlanOptions, UtilitySpec};
use behavior_cloak::model::simulate_mode;
use behavior_cloak::numerics::ToleranceConfig;
use behavior_cloak::scenario::{bounded_inputs, design_distortion};
use behavior_cloak::model::{ModeBank, StateSpaceMode};
use nalgebra::{dmatrix, DVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tol = ToleranceConfig::default();
    let bank = oscillators()?;
    let horizon = 30;
    let spec = UtilitySpec::average(horizon, 1, &tol)?;
    let design = design_distortion(&bank, 1, 2, &spec, 0.5, 1, None, &PlanOptions::default(), &tol)?;
    let cfg = design.config(&bank, &tol)?;

    let truth = bank.require(1)?;
    let inputs = bounded_inputs(horizon + truth.n() - 2, 1, 1.0, 3);
    let traj = simulate_mode(truth, &DVector::from_vec(vec![0.2, -0.4]), &inputs)?;

    let mut engine = init_engine(&cfg, None)?;
    for k in 0..traj.horizon() {
        match engine.step(traj.inputs().get(k), &traj.outputs()[k], None)? {
            StepOutcome::Withheld => println!("k = {:>2}  withheld", k + 1),
            StepOutcome::Emitted(e) if e.k <= 5 || e.ubar.is_none() => println!(
                "k = {:>2}  y = {:+.4}  ybar = {:+.4}  ubar = {:?}",
                k + 1,
                traj.outputs()[k][0],
                e.ybar[0],
                e.ubar.map(|u| u[0])
            ),
            StepOutcome::Emitted(_) => {}
        }
    }
    Ok(())
}

/// Two damped oscillators sharing the input channel and the position output.
fn oscillators() -> behavior_cloak::Result<ModeBank> {
    ModeBank::new(vec![
        StateSpaceMode::new(1, dmatrix![1.0, 0.1; -0.1, 0.95], dmatrix![0.0; 0.1], dmatrix![1.0, 0.0])?,
        StateSpaceMode::new(2, dmatrix![1.0, 0.1; -0.3, 0.8], dmatrix![0.0; 0.1], dmatrix![1.0, 0.0])?,
    ])
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
