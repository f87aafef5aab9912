//! Command-line front end. Exit codes: 0 ok, 1 validation failed, 2 bad input or
//! configuration, 3 regulation infeasible, 4 utility invariance infeasible.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::adversary::{classify, DEFAULT_ACCEPT_TOL};
use crate::engine::run_offline;
use crate::error::{Error, Result};
use crate::invariance::{build_lifted_operators, PlanOptions, UtilitySpec};
use crate::io::{self, ControllerFile, PlanFile, UtilityFile};
use crate::model::{self, validate_mode, ModeBank};
use crate::numerics::ToleranceConfig;
use crate::scenario::{design_distortion, run_vehicle_demo, DemoConfig};

pub const SEED_ENV: &str = "BEHAVIOR_CLOAK_SEED";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_REGULATION: u8 = 3;
pub const EXIT_INVARIANCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "behavior-cloak", version, about = "Disguise the active mode of a switched linear system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check observability, controllability and rank conditions of every mode.
    Validate {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Solve for the tracking controller and the utility-neutral plan.
    Design {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON matrix (rows) to use as the stabilizing gain.
        #[arg(long)]
        gain: Option<PathBuf>,
        /// Directory receiving controller.json and plan.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Replay a recorded trajectory through the distorter.
    Distort {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report which modes could have produced a trajectory.
    Classify {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ACCEPT_TOL)]
        accept_tol: f64,
    },
    /// Vehicle scenario; writes the figure CSVs and the intermediate artifacts.
    Demo {
        #[arg(long = "K", default_value_t = 500)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the printed pole-placement gain instead of the Riccati gain.
        #[arg(long)]
        pole_placed: bool,
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub true_mode: usize,
    #[arg(long)]
    pub target_mode: usize,
    /// Utility JSON file, or `average` for the channel mean over `--K` samples.
    #[arg(long, default_value = "average")]
    pub utility: String,
    #[arg(long = "K")]
    pub horizon: Option<usize>,
}

struct Scenario {
    bank: ModeBank,
    true_id: usize,
    target_id: usize,
    spec: UtilitySpec,
}

impl ScenarioArgs {
    fn load(&self, tol: &ToleranceConfig) -> Result<Scenario> {
        let bank = io::read_bank(&self.bank)?;
        if self.true_mode == self.target_mode {
            return Err(Error::invalid("true and target mode must differ"));
        }
        bank.require(self.true_mode)?;
        bank.require(self.target_mode)?;
        let file = if self.utility == "average" {
            let k = self
                .horizon
                .ok_or_else(|| Error::invalid("--K is required with the average utility"))?;
            UtilityFile::average(k, bank.m())
        } else {
            io::read_json::<UtilityFile>(Path::new(&self.utility))?
        };
        if let Some(k) = self.horizon {
            if k != file.horizon() {
                return Err(Error::invalid(format!(
                    "--K {k} disagrees with the utility horizon {}",
                    file.horizon()
                )));
            }
        }
        let spec = file.to_spec(bank.m(), tol)?;
        Ok(Scenario {
            bank,
            true_id: self.true_mode,
            target_id: self.target_mode,
            spec,
        })
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InfeasibleRegulation { .. } | Error::DesignFailure(_) => EXIT_REGULATION,
        Error::TrivialUtilityKernel | Error::InfeasibleInvariance { .. } => EXIT_INVARIANCE,
        _ => EXIT_INPUT,
    }
}

/// `BEHAVIOR_CLOAK_SEED` wins over the flag when set.
fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_validate(bank: &Path, tol: &ToleranceConfig) -> Result<u8> {
    let bank = io::read_bank(bank)?;
    let reports = bank
        .modes()
        .iter()
        .map(|md| validate_mode(md, tol))
        .collect::<Result<Vec<_>>>()?;
    print_json(&reports)?;
    Ok(if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}

fn cmd_design(
    scenario: &ScenarioArgs,
    magnitude: f64,
    seed: u64,
    gain: Option<&Path>,
    out: &Path,
    tol: &ToleranceConfig,
) -> Result<u8> {
    let sc = scenario.load(tol)?;
    let gain = match gain {
        Some(p) => Some(io::matrix_from_rows(&io::read_json::<Vec<Vec<f64>>>(p)?, "gain")?),
        None => None,
    };
    let design = design_distortion(
        &sc.bank,
        sc.true_id,
        sc.target_id,
        &sc.spec,
        magnitude,
        seed,
        gain.as_ref(),
        &PlanOptions::default(),
        tol,
    )?;
    create_dir(out)?;
    io::write_json(&out.join("controller.json"), &ControllerFile::from_controller(&design.controller))?;
    io::write_json(&out.join("plan.json"), &PlanFile::from_plan(&design.plan))?;
    print_json(&json!({
        "regulator_residual": design.solution.residual,
        "plan_residual": design.plan.residual,
        "delta_y_norm": design.plan.delta_y.norm(),
        "utility_change": (sc.spec.f() * &design.plan.delta_y).norm(),
    }))?;
    Ok(EXIT_OK)
}

fn cmd_distort(
    scenario: &ScenarioArgs,
    controller: &Path,
    plan: &Path,
    trajectory: &Path,
    out: &Path,
    tol: &ToleranceConfig,
) -> Result<u8> {
    let sc = scenario.load(tol)?;
    let ctrl = io::read_json::<ControllerFile>(controller)?.to_controller(&sc.bank, tol)?;
    if ctrl.true_mode_id() != sc.true_id || ctrl.target_mode_id() != sc.target_id {
        return Err(Error::invalid("controller file is for a different mode pair"));
    }
    let target = sc.bank.require(sc.target_id)?;
    let ops = build_lifted_operators(target, sc.spec.horizon())?;
    let plan = io::read_json::<PlanFile>(plan)?.to_plan(&ops, &sc.spec, tol)?;
    let cfg = crate::engine::DistortionConfig::new(
        sc.bank.require(sc.true_id)?.clone(),
        target.clone(),
        ctrl,
        plan,
        *tol,
    )?;
    let traj = io::read_trajectory(trajectory)?;
    let distorted = run_offline(&cfg, &traj)?;
    io::write_trajectory(out, &distorted.to_trajectory()?)?;

    let window = &traj.outputs()[distorted.offset..];
    let before = sc.spec.evaluate(&model::stack(window))?;
    let after = sc.spec.evaluate(&model::stack(&distorted.ybar))?;
    print_json(&json!({
        "utility_original": before.as_slice(),
        "utility_distorted": after.as_slice(),
        "withheld_samples": distorted.offset,
        "delta_y_norm": distorted.stacked_delta_y().norm(),
    }))?;
    Ok(EXIT_OK)
}

fn cmd_classify(bank: &Path, trajectory: &Path, accept_tol: f64) -> Result<u8> {
    let bank = io::read_bank(bank)?;
    let traj = io::read_trajectory(trajectory)?;
    print_json(&classify(&bank, &traj, accept_tol)?)?;
    Ok(EXIT_OK)
}

fn column(v: &[nalgebra::DVector<f64>], i: usize, len: usize) -> Vec<Option<f64>> {
    (0..len).map(|k| v.get(k).map(|x| x[i])).collect()
}

fn channel_names(prefix: &str, count: usize) -> Vec<String> {
    if count == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=count).map(|i| format!("{prefix}_{i}")).collect()
    }
}

/// Two signals, channel by channel, against `k`.
fn write_pair(
    path: &Path,
    names: (&str, &str),
    a: &[nalgebra::DVector<f64>],
    b: &[nalgebra::DVector<f64>],
    len: usize,
) -> Result<()> {
    let dim = a[0].len();
    let mut headers = channel_names(names.0, dim);
    headers.extend(channel_names(names.1, dim));
    let mut cols: Vec<_> = (0..dim).map(|i| column(a, i, len)).collect();
    cols.extend((0..dim).map(|i| column(b, i, len)));
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    io::write_series(path, &headers, &cols)
}

fn cmd_demo(cfg: &DemoConfig, out: &Path) -> Result<u8> {
    let demo = run_vehicle_demo(cfg)?;
    create_dir(out)?;
    let k = cfg.horizon;
    let (u, y) = (demo.original.inputs(), demo.original.outputs());
    let d = &demo.distorted;
    write_pair(&out.join("fig1.csv"), ("y", "ybar1"), y, &d.y1bar, k)?;
    write_pair(&out.join("fig2.csv"), ("u", "ubar1"), u, &d.u1bar, k)?;
    write_pair(&out.join("fig3.csv"), ("y", "ybar"), y, &d.ybar, k)?;
    write_pair(&out.join("fig4.csv"), ("u", "ubar"), u, &d.ubar, k)?;

    io::write_bank(&out.join("bank.json"), &demo.bank)?;
    io::write_json(&out.join("utility.json"), &UtilityFile::average(k, demo.bank.m()))?;
    io::write_json(&out.join("controller.json"), &ControllerFile::from_controller(&demo.design.controller))?;
    io::write_json(&out.join("plan.json"), &PlanFile::from_plan(&demo.design.plan))?;
    io::write_trajectory(&out.join("original.csv"), &demo.original)?;
    io::write_trajectory(&out.join("distorted.csv"), &d.to_trajectory()?)?;

    print_json(&json!({
        "K": k,
        "regulation_error": demo.regulation_error(),
        "utility_original": demo.original_utility()?.as_slice(),
        "utility_distorted": demo.distorted_utility()?.as_slice(),
        "delta_y_norm": d.stacked_delta_y().norm(),
        "original": demo.original_report,
        "distorted": demo.distorted_report,
    }))?;
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let tol = ToleranceConfig::default();
    match &cli.command {
        Command::Validate { bank } => cmd_validate(bank, &tol),
        Command::Design {
            scenario,
            magnitude,
            seed,
            gain,
            out,
        } => cmd_design(scenario, *magnitude, effective_seed(*seed)?, gain.as_deref(), out, &tol),
        Command::Distort {
            scenario,
            controller,
            plan,
            trajectory,
            out,
        } => cmd_distort(scenario, controller, plan, trajectory, out, &tol),
        Command::Classify {
            bank,
            trajectory,
            accept_tol,
        } => cmd_classify(bank, trajectory, *accept_tol),
        Command::Demo {
            horizon,
            magnitude,
            seed,
            pole_placed,
            out,
        } => {
            let cfg = DemoConfig {
                horizon: *horizon,
                magnitude: *magnitude,
                seed: effective_seed(*seed)?,
                pole_placed: *pole_placed,
                ..DemoConfig::default()
            };
            cmd_demo(&cfg, out)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
