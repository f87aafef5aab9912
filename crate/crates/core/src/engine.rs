//! Sample-by-sample distortion.
//!
//! Two copies of the target mode run side by side: the regulated one reproduces the true
//! outputs, the planned one replays the off-line kernel plan. Their sum is what gets sent.
//!
//! When the true state is not supplied the engine first buffers `n` samples, reconstructs
//! the state, and only then starts emitting. The emitted window then begins at sample `n`
//! and the configured horizon counts emitted samples.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::invariance::{build_lifted_operators, KernelPlan, LiftedOperators};
use crate::model::{self, StateSpaceMode, Trajectory};
use crate::numerics::{self, ToleranceConfig};
use crate::regulation::TrackingController;

/// Everything the engine needs for one window; immutable once built.
#[derive(Clone, Debug)]
pub struct DistortionConfig {
    true_mode: StateSpaceMode,
    target_mode: StateSpaceMode,
    controller: TrackingController,
    plan: KernelPlan,
    tol: ToleranceConfig,
}

impl DistortionConfig {
    pub fn new(
        true_mode: StateSpaceMode,
        target_mode: StateSpaceMode,
        controller: TrackingController,
        plan: KernelPlan,
        tol: ToleranceConfig,
    ) -> Result<Self> {
        if controller.true_mode_id() != true_mode.id()
            || controller.target_mode_id() != target_mode.id()
        {
            return Err(Error::invalid(format!(
                "controller maps mode {} to {}, config pairs {} with {}",
                controller.true_mode_id(),
                controller.target_mode_id(),
                true_mode.id(),
                target_mode.id()
            )));
        }
        if plan.mode_id != target_mode.id() {
            return Err(Error::invalid(format!(
                "plan is for mode {}, target is mode {}",
                plan.mode_id,
                target_mode.id()
            )));
        }
        if plan.horizon() < 2
            || plan.x2_init.len() != target_mode.n()
            || plan.u2.iter().any(|u| u.len() != target_mode.l())
        {
            return Err(Error::invalid("plan dimensions do not match the target mode"));
        }
        if true_mode.m() != target_mode.m() || true_mode.l() != target_mode.l() {
            return Err(Error::invalid("modes differ in output or input dimension"));
        }
        Ok(Self {
            true_mode,
            target_mode,
            controller,
            plan,
            tol,
        })
    }

    pub fn horizon(&self) -> usize {
        self.plan.horizon()
    }

    pub fn true_mode(&self) -> &StateSpaceMode {
        &self.true_mode
    }

    pub fn target_mode(&self) -> &StateSpaceMode {
        &self.target_mode
    }

    pub fn controller(&self) -> &TrackingController {
        &self.controller
    }

    pub fn plan(&self) -> &KernelPlan {
        &self.plan
    }

    pub fn tolerances(&self) -> &ToleranceConfig {
        &self.tol
    }
}

/// Snapshot of the engine's internal state.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineState {
    /// Samples emitted so far.
    pub k: usize,
    pub x1bar: Option<DVector<f64>>,
    pub x2bar: DVector<f64>,
    pub primed: bool,
}

/// One transmitted sample. `ubar` is absent for the last sample of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    /// 1-based position in the emitted window.
    pub k: usize,
    pub ubar: Option<DVector<f64>>,
    pub ybar: DVector<f64>,
    /// Regulated part `y1(k)`, equal to the true output.
    pub y1bar: DVector<f64>,
    /// Regulating part `u1(k)`.
    pub u1bar: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Emitted(Emission),
    /// Still collecting samples for state reconstruction.
    Withheld,
}

/// Streaming distorter; advance with one [`Engine::step`] per sample in arrival order.
#[derive(Clone, Debug)]
pub struct Engine<'a> {
    cfg: &'a DistortionConfig,
    state: EngineState,
    /// Best knowledge of the true state at the current sample.
    x_true: Option<DVector<f64>>,
    /// `(u(k), y(k))` pairs awaiting reconstruction; `u` of the newest pair is not yet known.
    buffer: VecDeque<(Option<DVector<f64>>, DVector<f64>)>,
}

/// Starts an engine; without `x1` it enters reconstruction mode.
pub fn init_engine<'a>(cfg: &'a DistortionConfig, x1: Option<&DVector<f64>>) -> Result<Engine<'a>> {
    let x1bar = match x1 {
        Some(x) => {
            cfg.true_mode.check_state(x)?;
            Some(cfg.controller.initial_virtual_state(x))
        }
        None => None,
    };
    Ok(Engine {
        cfg,
        state: EngineState {
            k: 0,
            primed: x1bar.is_some(),
            x1bar,
            x2bar: cfg.plan.x2_init.clone(),
        },
        x_true: x1.cloned(),
        buffer: VecDeque::new(),
    })
}

impl Engine<'_> {
    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.k >= self.cfg.horizon()
    }

    /// Consumes `(u(k), y(k))` and, when known, the true state `x(k)`.
    ///
    /// `u` may be omitted only for the sample that closes the window.
    pub fn step(
        &mut self,
        u: Option<&DVector<f64>>,
        y: &DVector<f64>,
        x: Option<&DVector<f64>>,
    ) -> Result<StepOutcome> {
        let horizon = self.cfg.horizon();
        if self.state.k >= horizon {
            return Err(Error::HorizonExhausted {
                step: self.state.k + 1,
                horizon,
            });
        }
        let true_mode = &self.cfg.true_mode;
        if y.len() != true_mode.m() {
            return Err(Error::invalid(format!(
                "output has length {}, expected {}",
                y.len(),
                true_mode.m()
            )));
        }
        if let Some(u) = u {
            true_mode.check_input(u)?;
        }
        if let Some(x) = x {
            true_mode.check_state(x)?;
            self.x_true = Some(x.clone());
        }

        if !self.state.primed {
            if self.x_true.is_none() {
                return self.buffer_sample(u, y);
            }
            let x = self.x_true.as_ref().expect("checked above");
            self.state.x1bar = Some(self.cfg.controller.initial_virtual_state(x));
            self.state.primed = true;
        }
        self.emit(u, y)
    }

    fn buffer_sample(
        &mut self,
        u: Option<&DVector<f64>>,
        y: &DVector<f64>,
    ) -> Result<StepOutcome> {
        let n = self.cfg.true_mode.n();
        // the previous sample's input is now known
        self.buffer.push_back((u.cloned(), y.clone()));
        while self.buffer.len() > n {
            self.buffer.pop_front();
        }
        if self.buffer.len() < n {
            if u.is_none() {
                return Err(Error::invalid("input missing before the window is complete"));
            }
            return Ok(StepOutcome::Withheld);
        }
        let mut inputs = Vec::with_capacity(n - 1);
        for (bu, _) in self.buffer.iter().take(n - 1) {
            inputs.push(
                bu.clone()
                    .ok_or_else(|| Error::invalid("input missing inside the reconstruction window"))?,
            );
        }
        let outputs: Vec<_> = self.buffer.iter().map(|(_, by)| by.clone()).collect();
        let rec = reconstruct_state(&self.cfg.true_mode, &inputs, &outputs, &self.cfg.tol)?;
        self.buffer.clear();
        self.x_true = Some(rec.current.clone());
        self.state.x1bar = Some(self.cfg.controller.initial_virtual_state(&rec.current));
        self.state.primed = true;
        self.emit(u, y)
    }

    fn emit(&mut self, u: Option<&DVector<f64>>, _y: &DVector<f64>) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let target = &cfg.target_mode;
        let idx = self.state.k;
        let last = idx + 1 == cfg.horizon();
        let x1bar = self.state.x1bar.as_ref().expect("engine is primed");
        let y1bar = target.c() * x1bar;
        let ybar = &y1bar + target.c() * &self.state.x2bar;

        let (ubar, u1bar) = if last {
            (None, None)
        } else {
            let u = u.ok_or_else(|| {
                Error::invalid(format!("input missing at emitted sample {}", idx + 1))
            })?;
            let x = self
                .x_true
                .as_ref()
                .ok_or_else(|| Error::invalid("true state unavailable"))?;
            let u1 = cfg.controller.control(x1bar, x, u);
            let u2 = &cfg.plan.u2[idx];
            let ubar = &u1 + u2;

            let next_x1 = target.a() * x1bar + target.b() * &u1;
            let next_x2 = target.a() * &self.state.x2bar + target.b() * u2;
            let next_x = cfg.true_mode.a() * x + cfg.true_mode.b() * u;
            self.state.x1bar = Some(next_x1);
            self.state.x2bar = next_x2;
            self.x_true = Some(next_x);
            (Some(ubar), Some(u1))
        };
        self.state.k += 1;
        Ok(StepOutcome::Emitted(Emission {
            k: idx + 1,
            ubar,
            ybar,
            y1bar,
            u1bar,
        }))
    }
}

/// State recovered from a window of noise-free samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    /// State at the first sample of the window.
    pub start: DVector<f64>,
    /// State at the last sample of the window.
    pub current: DVector<f64>,
    pub residual: f64,
}

/// Solves `Y = O_w x + T_w U` for the window start and propagates to the window end.
///
/// `outputs` holds `w >= n` samples and `inputs` the `w - 1` inputs between them.
pub fn reconstruct_state(
    mode: &StateSpaceMode,
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    tol: &ToleranceConfig,
) -> Result<Reconstruction> {
    let w = outputs.len();
    if w < mode.n() || inputs.len() + 1 != w {
        return Err(Error::invalid(format!(
            "reconstruction needs at least {} outputs and one fewer inputs, got {} and {}",
            mode.n(),
            w,
            inputs.len()
        )));
    }
    for u in inputs {
        mode.check_input(u)?;
    }
    if outputs.iter().any(|y| y.len() != mode.m()) {
        return Err(Error::invalid("output samples do not match the mode"));
    }
    let stacked_y = model::stack(outputs);
    let forced = if w >= 2 {
        let ops: LiftedOperators = build_lifted_operators(mode, w)?;
        ops.response(&DVector::zeros(mode.n()), inputs)?
    } else {
        DVector::zeros(mode.m())
    };
    let mut o = nalgebra::DMatrix::zeros(w * mode.m(), mode.n());
    let mut block = mode.c().clone();
    for k in 0..w {
        o.view_mut((k * mode.m(), 0), (mode.m(), mode.n()))
            .copy_from(&block);
        block = &block * mode.a();
    }
    if numerics::rank(&o, tol)? < mode.n() {
        return Err(Error::Unobservable);
    }
    let ls = numerics::lstsq_min_norm(&o, &(&stacked_y - forced), tol)?;
    if ls.residual_norm > tol.residual_tol * (1.0 + stacked_y.norm()) {
        return Err(Error::InconsistentData {
            residual: ls.residual_norm,
        });
    }
    let mut current = ls.x.clone();
    for u in inputs {
        current = mode.a() * current + mode.b() * u;
    }
    Ok(Reconstruction {
        start: ls.x,
        current,
        residual: ls.residual_norm,
    })
}

/// The transmitted window together with what it changed.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortedTrajectory {
    pub ubar: Vec<DVector<f64>>,
    pub ybar: Vec<DVector<f64>>,
    pub delta_u: Vec<DVector<f64>>,
    pub delta_y_applied: Vec<DVector<f64>>,
    /// Regulated parts, for comparing against the true signals.
    pub u1bar: Vec<DVector<f64>>,
    pub y1bar: Vec<DVector<f64>>,
    /// Index into the input trajectory of the first emitted sample.
    pub offset: usize,
}

impl DistortedTrajectory {
    pub fn horizon(&self) -> usize {
        self.ybar.len()
    }

    /// `(Ubar, Ybar)` as a trajectory without states.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.ubar.clone(), self.ybar.clone(), None)
    }

    pub fn stacked_delta_y(&self) -> DVector<f64> {
        model::stack(&self.delta_y_applied)
    }
}

/// Folds [`Engine::step`] over a recorded trajectory.
///
/// With recorded states the trajectory must span the horizon exactly; without them it must
/// also cover the `n - 1` withheld reconstruction samples.
pub fn run_offline(cfg: &DistortionConfig, traj: &Trajectory) -> Result<DistortedTrajectory> {
    let horizon = cfg.horizon();
    let withheld = if traj.states().is_some() {
        0
    } else {
        cfg.true_mode.n() - 1
    };
    if traj.horizon() != horizon + withheld {
        return Err(Error::invalid(format!(
            "trajectory has {} samples, the configured window needs {}",
            traj.horizon(),
            horizon + withheld
        )));
    }
    let x1 = traj.states().map(|xs| &xs[0]);
    let mut engine = init_engine(cfg, x1)?;
    let mut out = DistortedTrajectory {
        ubar: Vec::with_capacity(horizon - 1),
        ybar: Vec::with_capacity(horizon),
        delta_u: Vec::with_capacity(horizon - 1),
        delta_y_applied: Vec::with_capacity(horizon),
        u1bar: Vec::with_capacity(horizon - 1),
        y1bar: Vec::with_capacity(horizon),
        offset: withheld,
    };
    for k in 0..traj.horizon() {
        let u = traj.inputs().get(k);
        let y = &traj.outputs()[k];
        let x = traj.states().map(|xs| &xs[k]);
        match engine.step(u, y, x)? {
            StepOutcome::Withheld => {}
            StepOutcome::Emitted(e) => {
                out.delta_y_applied.push(&e.ybar - y);
                out.ybar.push(e.ybar);
                out.y1bar.push(e.y1bar);
                if let (Some(ubar), Some(u1), Some(u)) = (e.ubar, e.u1bar, u) {
                    out.delta_u.push(&ubar - u);
                    out.ubar.push(ubar);
                    out.u1bar.push(u1);
                }
            }
        }
    }
    Ok(out)
}
