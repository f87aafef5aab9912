//! Operation modes of a switched discrete-time LTI system and the trajectories they generate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, ToleranceConfig};

/// One operation mode `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceMode {
    id: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl StateSpaceMode {
    pub fn new(id: usize, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::invalid(format!(
                "mode {id}: A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::invalid(format!(
                "mode {id}: B must be {n}xl with l >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::invalid(format!(
                "mode {id}: C must be mx{n} with m >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        numerics::ensure_finite(&a, "A")?;
        numerics::ensure_finite(&b, "B")?;
        numerics::ensure_finite(&c, "C")?;
        Ok(Self { id, a, b, c })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Output dimension.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Input dimension.
    pub fn l(&self) -> usize {
        self.b.ncols()
    }

    /// Same mode under the state change `x = T z`.
    pub fn similarity_transform(&self, t: &DMatrix<f64>) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("similarity transform is singular"))?;
        Self::new(self.id, &t_inv * &self.a * t, &t_inv * &self.b, &self.c * t)
    }

    /// `[C; CA; ...; CA^(n-1)]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n * m, n);
        let mut block = self.c.clone();
        for i in 0..n {
            out.view_mut((i * m, 0), (m, n)).copy_from(&block);
            block = &block * &self.a;
        }
        out
    }

    /// `[B, AB, ..., A^(n-1)B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, l) = (self.n(), self.l());
        let mut out = DMatrix::zeros(n, n * l);
        let mut block = self.b.clone();
        for i in 0..n {
            out.view_mut((0, i * l), (n, l)).copy_from(&block);
            block = &self.a * &block;
        }
        out
    }

    pub(crate) fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() == self.l() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mode {}: input has length {}, expected {}",
                self.id,
                u.len(),
                self.l()
            )))
        }
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.n() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mode {}: state has length {}, expected {}",
                self.id,
                x.len(),
                self.n()
            )))
        }
    }
}

/// Modes of one switched system; all share `m` and `l`, ids run `1..=N`.
#[derive(Clone, Debug)]
pub struct ModeBank {
    modes: Vec<StateSpaceMode>,
}

impl ModeBank {
    pub fn new(mut modes: Vec<StateSpaceMode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::invalid("mode bank is empty"))?;
        let (m, l) = (first.m(), first.l());
        if let Some(bad) = modes.iter().find(|md| md.m() != m || md.l() != l) {
            return Err(Error::invalid(format!(
                "mode {} has (m, l) = ({}, {}), bank requires ({m}, {l})",
                bad.id(),
                bad.m(),
                bad.l()
            )));
        }
        modes.sort_by_key(|md| md.id());
        for (i, md) in modes.iter().enumerate() {
            if md.id() != i + 1 {
                return Err(Error::invalid(
                    "mode ids must be unique and contiguous starting at 1",
                ));
            }
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[StateSpaceMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn m(&self) -> usize {
        self.modes[0].m()
    }

    pub fn l(&self) -> usize {
        self.modes[0].l()
    }

    pub fn get(&self, id: usize) -> Option<&StateSpaceMode> {
        id.checked_sub(1).and_then(|i| self.modes.get(i))
    }

    pub fn require(&self, id: usize) -> Result<&StateSpaceMode> {
        self.get(id)
            .ok_or_else(|| Error::invalid(format!("mode {id} is not in the bank")))
    }
}

/// Input sequence `u(1..K-1)`, output sequence `y(1..K)` and optionally the states `x(1..K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    u: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    x: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(
        u: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
        x: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        let k = y.len();
        if k < 2 {
            return Err(Error::invalid(format!("horizon must be at least 2, got {k}")));
        }
        if u.len() != k - 1 {
            return Err(Error::invalid(format!(
                "expected {} inputs for {k} outputs, got {}",
                k - 1,
                u.len()
            )));
        }
        uniform_len(&u, "input")?;
        uniform_len(&y, "output")?;
        if let Some(xs) = &x {
            if xs.len() != k {
                return Err(Error::invalid(format!(
                    "expected {k} states, got {}",
                    xs.len()
                )));
            }
            uniform_len(xs, "state")?;
        }
        let finite = |v: &Vec<DVector<f64>>| v.iter().all(|s| s.iter().all(|e| e.is_finite()));
        if !finite(&u) || !finite(&y) || x.as_ref().is_some_and(|xs| !finite(xs)) {
            return Err(Error::invalid("trajectory has non-finite samples"));
        }
        Ok(Self { u, y, x })
    }

    /// Horizon length `K`.
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn states(&self) -> Option<&[DVector<f64>]> {
        self.x.as_deref()
    }

    pub fn m(&self) -> usize {
        self.y[0].len()
    }

    pub fn l(&self) -> usize {
        self.u[0].len()
    }

    pub fn without_states(&self) -> Self {
        Self {
            u: self.u.clone(),
            y: self.y.clone(),
            x: None,
        }
    }

    /// Stacked `col[y(1), ..., y(K)]`.
    pub fn stacked_outputs(&self) -> DVector<f64> {
        stack(&self.y)
    }

    /// Stacked `col[u(1), ..., u(K-1)]`.
    pub fn stacked_inputs(&self) -> DVector<f64> {
        stack(&self.u)
    }
}

fn uniform_len(v: &[DVector<f64>], what: &str) -> Result<()> {
    let len = v.first().map_or(0, |s| s.len());
    if len == 0 {
        return Err(Error::invalid(format!("{what} samples must be non-empty")));
    }
    if v.iter().any(|s| s.len() != len) {
        return Err(Error::invalid(format!("{what} samples have differing lengths")));
    }
    Ok(())
}

pub(crate) fn stack(v: &[DVector<f64>]) -> DVector<f64> {
    let len: usize = v.iter().map(|s| s.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for s in v {
        out.rows_mut(at, s.len()).copy_from(s);
        at += s.len();
    }
    out
}

pub(crate) fn unstack(v: &DVector<f64>, block: usize) -> Vec<DVector<f64>> {
    debug_assert!(block > 0 && v.len().is_multiple_of(block));
    v.as_slice()
        .chunks(block)
        .map(DVector::from_column_slice)
        .collect()
}

/// Continuous-time model sampled with a zero-order hold.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Sampling period in seconds.
    pub sample_period: f64,
}

impl ContinuousMode {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sample_period: f64,
    ) -> Result<Self> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::invalid("sample period must be positive"));
        }
        // reuse the discrete-time shape checks
        StateSpaceMode::new(0, a.clone(), b.clone(), c.clone())?;
        Ok(Self {
            a,
            b,
            c,
            sample_period,
        })
    }
}

/// Exact zero-order-hold discretization from `exp([[A, B], [0, 0]] h)`.
pub fn discretize_zoh(cm: &ContinuousMode, id: usize) -> Result<StateSpaceMode> {
    let (n, l) = (cm.a.nrows(), cm.b.ncols());
    let mut aug = DMatrix::zeros(n + l, n + l);
    aug.view_mut((0, 0), (n, n)).copy_from(&cm.a);
    aug.view_mut((0, n), (n, l)).copy_from(&cm.b);
    let e = numerics::matrix_exponential(&(aug * cm.sample_period))?;
    StateSpaceMode::new(
        id,
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, l)).into_owned(),
        cm.c.clone(),
    )
}

/// Runs the mode from `x1` under `inputs`, recording states. The horizon is `inputs.len() + 1`.
pub fn simulate_mode(
    mode: &StateSpaceMode,
    x1: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Result<Trajectory> {
    mode.check_state(x1)?;
    if inputs.is_empty() {
        return Err(Error::invalid("at least one input is required (K >= 2)"));
    }
    for u in inputs {
        mode.check_input(u)?;
    }
    let mut xs = Vec::with_capacity(inputs.len() + 1);
    let mut ys = Vec::with_capacity(inputs.len() + 1);
    let mut x = x1.clone();
    for u in inputs {
        ys.push(mode.c() * &x);
        let next = mode.a() * &x + mode.b() * u;
        xs.push(std::mem::replace(&mut x, next));
    }
    ys.push(mode.c() * &x);
    xs.push(x);
    Trajectory::new(inputs.to_vec(), ys, Some(xs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub rank: usize,
    pub required: usize,
    pub passed: bool,
}

/// Outcome of checking the standing assumptions on one mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mode_id: usize,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const OBSERVABLE: &str = "observable";
pub const CONTROLLABLE: &str = "controllable";
pub const OUTPUT_FULL_ROW_RANK: &str = "output_full_row_rank";
pub const INPUT_TRIVIAL_KERNEL: &str = "input_trivial_kernel";

/// Observability, controllability, surjective `C` and injective `B`.
pub fn validate_mode(mode: &StateSpaceMode, tol: &ToleranceConfig) -> Result<ValidationReport> {
    let (n, m, l) = (mode.n(), mode.m(), mode.l());
    let check = |name, mat: &DMatrix<f64>, required| -> Result<AssumptionCheck> {
        let rank = numerics::rank(mat, tol)?;
        Ok(AssumptionCheck {
            name,
            rank,
            required,
            passed: rank == required,
        })
    };
    let checks = vec![
        check(OBSERVABLE, &mode.observability_matrix(), n)?,
        check(CONTROLLABLE, &mode.controllability_matrix(), n)?,
        check(OUTPUT_FULL_ROW_RANK, mode.c(), m)?,
        check(INPUT_TRIVIAL_KERNEL, mode.b(), l)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        mode_id: mode.id(),
        checks,
        passed,
    })
}
