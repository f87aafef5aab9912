//! End-to-end pipeline: regulator, gain and plan for a mode pair, plus the vehicle demo.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{classify, ClassificationReport, DEFAULT_ACCEPT_TOL};
use crate::engine::{run_offline, DistortedTrajectory, DistortionConfig};
use crate::error::{Error, Result};
use crate::invariance::{
    build_lifted_operators, solve_utility_invariance_with, KernelPlan, PlanOptions, UtilitySpec,
};
use crate::model::{simulate_mode, ModeBank, Trajectory};
use crate::numerics::ToleranceConfig;
use crate::regulation::{
    build_tracking_controller, design_stabilizing_gain, solve_regulator_equations,
    RegulatorSolution, TrackingController,
};
use crate::vehicle;

/// Everything produced off-line for one `(true, target)` pair and utility.
#[derive(Clone, Debug)]
pub struct Design {
    pub solution: RegulatorSolution,
    pub controller: TrackingController,
    pub plan: KernelPlan,
}

impl Design {
    pub fn config(&self, bank: &ModeBank, tol: &ToleranceConfig) -> Result<DistortionConfig> {
        DistortionConfig::new(
            bank.require(self.controller.true_mode_id())?.clone(),
            bank.require(self.controller.target_mode_id())?.clone(),
            self.controller.clone(),
            self.plan.clone(),
            *tol,
        )
    }
}

/// Runs the off-line steps in order. Without `gain` the Riccati gain of the target is used.
#[allow(clippy::too_many_arguments)]
pub fn design_distortion(
    bank: &ModeBank,
    true_id: usize,
    target_id: usize,
    spec: &UtilitySpec,
    magnitude: f64,
    seed: u64,
    gain: Option<&DMatrix<f64>>,
    opts: &PlanOptions,
    tol: &ToleranceConfig,
) -> Result<Design> {
    if true_id == target_id {
        return Err(Error::invalid("true and target mode must differ"));
    }
    let true_mode = bank.require(true_id)?;
    let target = bank.require(target_id)?;
    let solution = solve_regulator_equations(true_mode, target, tol)?;
    let gain = match gain {
        Some(g) => g.clone(),
        None => design_stabilizing_gain(target, tol)?,
    };
    let controller = build_tracking_controller(&solution, target, &gain, tol)?;
    let ops = build_lifted_operators(target, spec.horizon())?;
    let plan = solve_utility_invariance_with(&ops, spec, magnitude, seed, tol, opts)?;
    Ok(Design {
        solution,
        controller,
        plan,
    })
}

/// `len` inputs drawn uniformly from `[-bound, bound]^l`.
pub fn bounded_inputs(len: usize, l: usize, bound: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| DVector::from_fn(l, |_, _| rng.random_range(-bound..=bound)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoConfig {
    pub horizon: usize,
    pub magnitude: f64,
    pub seed: u64,
    pub sample_period: f64,
    /// Use the printed pole-placement gain instead of the Riccati gain.
    pub pole_placed: bool,
    pub plan: PlanOptions,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            horizon: 500,
            magnitude: 1.0,
            seed: 0,
            sample_period: vehicle::SAMPLE_PERIOD,
            pole_placed: false,
            plan: PlanOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DemoOutcome {
    pub bank: ModeBank,
    pub spec: UtilitySpec,
    pub design: Design,
    /// The sports car driven from rest, with states.
    pub original: Trajectory,
    pub distorted: DistortedTrajectory,
    pub original_report: ClassificationReport,
    pub distorted_report: ClassificationReport,
}

impl DemoOutcome {
    pub fn max_output(&self) -> f64 {
        self.original.outputs().iter().map(|y| y.norm()).fold(0.0, f64::max)
    }

    /// `max_k |y1(k) - y(k)|`.
    pub fn regulation_error(&self) -> f64 {
        self.distorted
            .y1bar
            .iter()
            .zip(self.original.outputs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn original_utility(&self) -> Result<DVector<f64>> {
        self.spec.evaluate(&self.original.stacked_outputs())
    }

    pub fn distorted_utility(&self) -> Result<DVector<f64>> {
        self.spec.evaluate(&crate::model::stack(&self.distorted.ybar))
    }
}

/// Sports car disguised as the average car under an average-preserving distortion.
pub fn run_vehicle_demo(cfg: &DemoConfig) -> Result<DemoOutcome> {
    let tol = ToleranceConfig::default();
    let bank = vehicle::bank(cfg.sample_period)?;
    let spec = UtilitySpec::average(cfg.horizon, bank.m(), &tol)?;
    let gain = cfg.pole_placed.then(vehicle::pole_placed_gain);
    let design = design_distortion(
        &bank,
        1,
        2,
        &spec,
        cfg.magnitude,
        cfg.seed,
        gain.as_ref(),
        &cfg.plan,
        &tol,
    )?;
    let true_mode = bank.require(1)?;
    let inputs = bounded_inputs(cfg.horizon - 1, bank.l(), 1.0, cfg.seed);
    let original = simulate_mode(true_mode, &DVector::zeros(true_mode.n()), &inputs)?;
    let distorted = run_offline(&design.config(&bank, &tol)?, &original)?;
    let original_report = classify(&bank, &original, DEFAULT_ACCEPT_TOL)?;
    let distorted_report = classify(&bank, &distorted.to_trajectory()?, DEFAULT_ACCEPT_TOL)?;
    Ok(DemoOutcome {
        bank,
        spec,
        design,
        original,
        distorted,
        original_report,
        distorted_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Verdict;

    #[test]
    fn same_mode_pair_is_rejected() {
        let tol = ToleranceConfig::default();
        let bank = vehicle::bank(0.1).unwrap();
        let spec = UtilitySpec::average(10, 1, &tol).unwrap();
        let err = design_distortion(&bank, 2, 2, &spec, 1.0, 0, None, &PlanOptions::default(), &tol);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn small_demo_disguises_the_mode() {
        let out = run_vehicle_demo(&DemoConfig {
            horizon: 60,
            ..DemoConfig::default()
        })
        .unwrap();
        assert_eq!(out.original_report.verdict, Verdict::Mode(1));
        assert_eq!(out.distorted_report.verdict, Verdict::Mode(2));
        assert!(out.regulation_error() <= 1e-6 * (1.0 + out.max_output()));
        let (a, b) = (out.original_utility().unwrap(), out.distorted_utility().unwrap());
        assert!((a - b).norm() <= 1e-8 * (1.0 + out.original_utility().unwrap().norm()));
        assert!((out.distorted.stacked_delta_y().norm() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn inputs_are_bounded_and_seeded() {
        let a = bounded_inputs(100, 2, 1.0, 5);
        assert_eq!(a, bounded_inputs(100, 2, 1.0, 5));
        assert_ne!(a, bounded_inputs(100, 2, 1.0, 6));
        assert!(a.iter().all(|u| u.iter().all(|v| v.abs() <= 1.0)));
    }
}
