//! Virtual output regulation: make a target mode reproduce the outputs of the true mode.
//!
//! A solution `(Pi, Gamma, Theta)` of
//!
//! ```text
//! A' Pi - Pi A + B' Gamma = 0
//! C' Pi - C             = 0
//! B' Theta - Pi B       = 0
//! ```
//!
//! yields the controller `u1(k) = R x1(k) + L x(k) + S u(k)` with `L = Gamma - R Pi`,
//! `S = Theta`, started from `x1(1) = Pi x(1)`, under which `C' x1(k) = y(k)` for all `k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{StateSpaceMode, Trajectory};
use crate::numerics::{self, ToleranceConfig};

/// Riccati iteration stops once successive iterates differ by at most this (relative to `|P|`).
pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RegulatorSolution {
    pub true_mode_id: usize,
    pub target_mode_id: usize,
    pub pi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    /// Largest absolute entry over the three equation residuals.
    pub residual: f64,
}

/// Largest absolute residual of the three regulator equations for a candidate triple.
pub fn regulator_residual(
    true_mode: &StateSpaceMode,
    target_mode: &StateSpaceMode,
    pi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    theta: &DMatrix<f64>,
) -> Result<f64> {
    check_pair(true_mode, target_mode)?;
    let (n, nt, l) = (true_mode.n(), target_mode.n(), true_mode.l());
    if pi.shape() != (nt, n) || gamma.shape() != (l, n) || theta.shape() != (l, l) {
        return Err(Error::invalid(format!(
            "regulator unknowns must be Pi {nt}x{n}, Gamma {l}x{n}, Theta {l}x{l}"
        )));
    }
    let (a, b, c) = (true_mode.a(), true_mode.b(), true_mode.c());
    let (at, bt, ct) = (target_mode.a(), target_mode.b(), target_mode.c());
    let e1 = at * pi - pi * a + bt * gamma;
    let e2 = ct * pi - c;
    let e3 = bt * theta - pi * b;
    Ok(numerics::max_abs(&e1)
        .max(numerics::max_abs(&e2))
        .max(numerics::max_abs(&e3)))
}

fn check_pair(true_mode: &StateSpaceMode, target_mode: &StateSpaceMode) -> Result<()> {
    if true_mode.m() != target_mode.m() || true_mode.l() != target_mode.l() {
        return Err(Error::invalid(format!(
            "modes {} and {} differ in output or input dimension",
            true_mode.id(),
            target_mode.id()
        )));
    }
    Ok(())
}

/// Minimum-norm least-squares solution of the vectorized regulator equations.
///
/// Fails with [`Error::InfeasibleRegulation`] when the attained residual exceeds
/// `tol.residual_tol`, i.e. when the target mode cannot imitate the true mode's outputs.
pub fn solve_regulator_equations(
    true_mode: &StateSpaceMode,
    target_mode: &StateSpaceMode,
    tol: &ToleranceConfig,
) -> Result<RegulatorSolution> {
    check_pair(true_mode, target_mode)?;
    let (n, nt, m, l) = (true_mode.n(), target_mode.n(), true_mode.m(), true_mode.l());
    let (a, b, c) = (true_mode.a(), true_mode.b(), true_mode.c());
    let (at, bt, ct) = (target_mode.a(), target_mode.b(), target_mode.c());

    // column-major vec: vec(XYZ) = (Z^T kron X) vec(Y)
    let n_pi = nt * n;
    let n_gamma = l * n;
    let n_theta = l * l;
    let rows = nt * n + m * n + nt * l;
    let mut lhs = DMatrix::zeros(rows, n_pi + n_gamma + n_theta);
    let mut rhs = DVector::zeros(rows);

    let i_n = DMatrix::<f64>::identity(n, n);
    let i_nt = DMatrix::<f64>::identity(nt, nt);
    let i_l = DMatrix::<f64>::identity(l, l);

    let mut row = 0;
    lhs.view_mut((row, 0), (nt * n, n_pi))
        .copy_from(&(i_n.kronecker(at) - a.transpose().kronecker(&i_nt)));
    lhs.view_mut((row, n_pi), (nt * n, n_gamma))
        .copy_from(&i_n.kronecker(bt));
    row += nt * n;

    lhs.view_mut((row, 0), (m * n, n_pi))
        .copy_from(&i_n.kronecker(ct));
    rhs.rows_mut(row, m * n)
        .copy_from(&DVector::from_column_slice(c.as_slice()));
    row += m * n;

    lhs.view_mut((row, 0), (nt * l, n_pi))
        .copy_from(&(-b.transpose().kronecker(&i_nt)));
    lhs.view_mut((row, n_pi + n_gamma), (nt * l, n_theta))
        .copy_from(&i_l.kronecker(bt));

    let sol = numerics::lstsq_min_norm(&lhs, &rhs, tol)?;
    let pi = DMatrix::from_column_slice(nt, n, &sol.x.as_slice()[..n_pi]);
    let gamma = DMatrix::from_column_slice(l, n, &sol.x.as_slice()[n_pi..n_pi + n_gamma]);
    let theta = DMatrix::from_column_slice(l, l, &sol.x.as_slice()[n_pi + n_gamma..]);
    let residual = regulator_residual(true_mode, target_mode, &pi, &gamma, &theta)?;
    if residual > tol.residual_tol {
        return Err(Error::InfeasibleRegulation { residual });
    }
    Ok(RegulatorSolution {
        true_mode_id: true_mode.id(),
        target_mode_id: target_mode.id(),
        pi,
        gamma,
        theta,
        residual,
    })
}

/// Discrete-time LQR gain with identity weights, `R = -(I + B'PB)^-1 B'PA`.
///
/// `P` comes from the Riccati fixed-point iteration started at the identity.
pub fn design_stabilizing_gain(
    target_mode: &StateSpaceMode,
    tol: &ToleranceConfig,
) -> Result<DMatrix<f64>> {
    let (a, b) = (target_mode.a(), target_mode.b());
    let (n, l) = (target_mode.n(), target_mode.l());
    let q = DMatrix::<f64>::identity(n, n);
    let rw = DMatrix::<f64>::identity(l, l);
    let at = a.transpose();
    let bt = b.transpose();

    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..RICCATI_MAX_ITER {
        let btpa = &bt * &p * a;
        let s = &rw + &bt * &p * b;
        let k = s
            .lu()
            .solve(&btpa)
            .ok_or_else(|| Error::DesignFailure("singular Riccati gain system".into()))?;
        let mut next = &at * &p * a - btpa.transpose() * &k + &q;
        // keep P symmetric against round-off drift
        next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::DesignFailure("Riccati iteration diverged".into()));
        }
        let step = numerics::max_abs(&(&next - &p));
        p = next;
        if step <= RICCATI_TOL * numerics::max_abs(&p).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::DesignFailure(format!(
            "Riccati iteration did not converge in {RICCATI_MAX_ITER} iterations"
        )));
    }
    let gain = -(&rw + &bt * &p * b)
        .lu()
        .solve(&(&bt * &p * a))
        .ok_or_else(|| Error::DesignFailure("singular Riccati gain system".into()))?;
    check_stabilizing_gain(target_mode, &gain, tol)?;
    Ok(gain)
}

/// Accepts a caller-chosen `R` if `A' + B'R` is Schur.
pub fn check_stabilizing_gain(
    target_mode: &StateSpaceMode,
    gain: &DMatrix<f64>,
    tol: &ToleranceConfig,
) -> Result<()> {
    if gain.shape() != (target_mode.l(), target_mode.n()) {
        return Err(Error::invalid(format!(
            "gain must be {}x{}, got {}x{}",
            target_mode.l(),
            target_mode.n(),
            gain.nrows(),
            gain.ncols()
        )));
    }
    let closed = target_mode.a() + target_mode.b() * gain;
    let radius = numerics::spectral_radius(&closed)?;
    if radius <= 1.0 - tol.schur_margin {
        Ok(())
    } else {
        Err(Error::DesignFailure(format!(
            "closed loop has spectral radius {radius:.6}, not Schur"
        )))
    }
}

/// Static regulator `u1(k) = R x1(k) + L x(k) + S u(k)` with `x1(1) = Pi x(1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingController {
    true_mode_id: usize,
    target_mode_id: usize,
    r: DMatrix<f64>,
    l: DMatrix<f64>,
    s: DMatrix<f64>,
    pi: DMatrix<f64>,
}

impl TrackingController {
    pub fn true_mode_id(&self) -> usize {
        self.true_mode_id
    }

    pub fn target_mode_id(&self) -> usize {
        self.target_mode_id
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Maps the true initial state to the virtual one: `x1(1) = Pi x(1)`.
    pub fn init_map(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn initial_virtual_state(&self, x1: &DVector<f64>) -> DVector<f64> {
        &self.pi * x1
    }

    pub fn control(
        &self,
        x1bar: &DVector<f64>,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        &self.r * x1bar + &self.l * x + &self.s * u
    }

    /// Reassembles a controller from stored matrices, rechecking shapes and stability.
    pub fn from_parts(
        true_mode: &StateSpaceMode,
        target_mode: &StateSpaceMode,
        r: DMatrix<f64>,
        l: DMatrix<f64>,
        s: DMatrix<f64>,
        pi: DMatrix<f64>,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        check_pair(true_mode, target_mode)?;
        let (n, nt, li) = (true_mode.n(), target_mode.n(), true_mode.l());
        if l.shape() != (li, n) || s.shape() != (li, li) || pi.shape() != (nt, n) {
            return Err(Error::invalid(format!(
                "controller matrices must be L {li}x{n}, S {li}x{li}, Pi {nt}x{n}"
            )));
        }
        check_stabilizing_gain(target_mode, &r, tol)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Self {
            true_mode_id: true_mode.id(),
            target_mode_id: target_mode.id(),
            r,
            l,
            s,
            pi,
        })
    }
}

/// `L = Gamma - R Pi`, `S = Theta`.
pub fn build_tracking_controller(
    sol: &RegulatorSolution,
    target_mode: &StateSpaceMode,
    gain: &DMatrix<f64>,
    tol: &ToleranceConfig,
) -> Result<TrackingController> {
    if sol.target_mode_id != target_mode.id() {
        return Err(Error::invalid(format!(
            "solution targets mode {}, got mode {}",
            sol.target_mode_id,
            target_mode.id()
        )));
    }
    if sol.residual > tol.residual_tol {
        return Err(Error::invalid(format!(
            "regulator solution is not feasible (residual {:.3e})",
            sol.residual
        )));
    }
    check_stabilizing_gain(target_mode, gain, tol).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(TrackingController {
        true_mode_id: sol.true_mode_id,
        target_mode_id: sol.target_mode_id,
        r: gain.clone(),
        l: &sol.gamma - gain * &sol.pi,
        s: sol.theta.clone(),
        pi: sol.pi.clone(),
    })
}

/// Per-step norms of `e(k) = x1(k) - Pi x(k)` and `r(k) = y1(k) - y(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulationDiagnostics {
    pub state_error: Vec<f64>,
    pub output_error: Vec<f64>,
    /// The regulated virtual outputs `y1(k)`.
    pub virtual_outputs: Vec<DVector<f64>>,
    /// The regulating inputs `u1(k)`.
    pub virtual_inputs: Vec<DVector<f64>>,
}

impl RegulationDiagnostics {
    pub fn max_state_error(&self) -> f64 {
        self.state_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_output_error(&self) -> f64 {
        self.output_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Closes the virtual target loop over a recorded trajectory starting from `x1(1) = Pi x(1)`.
pub fn verify_regulation(
    true_mode: &StateSpaceMode,
    target_mode: &StateSpaceMode,
    ctrl: &TrackingController,
    traj: &Trajectory,
) -> Result<RegulationDiagnostics> {
    let xs = traj
        .states()
        .ok_or_else(|| Error::invalid("regulation check needs recorded states"))?;
    let x1bar = ctrl.initial_virtual_state(&xs[0]);
    verify_regulation_from(true_mode, target_mode, ctrl, traj, x1bar)
}

/// As [`verify_regulation`] but from an arbitrary virtual initial state.
pub fn verify_regulation_from(
    true_mode: &StateSpaceMode,
    target_mode: &StateSpaceMode,
    ctrl: &TrackingController,
    traj: &Trajectory,
    x1bar_init: DVector<f64>,
) -> Result<RegulationDiagnostics> {
    check_pair(true_mode, target_mode)?;
    if ctrl.true_mode_id != true_mode.id() || ctrl.target_mode_id != target_mode.id() {
        return Err(Error::invalid("controller was built for a different mode pair"));
    }
    let xs = traj
        .states()
        .ok_or_else(|| Error::invalid("regulation check needs recorded states"))?;
    true_mode.check_state(&xs[0])?;
    target_mode.check_state(&x1bar_init)?;
    if traj.m() != true_mode.m() || traj.l() != true_mode.l() {
        return Err(Error::invalid("trajectory dimensions do not match the modes"));
    }
    let k_len = traj.horizon();
    let mut diag = RegulationDiagnostics {
        state_error: Vec::with_capacity(k_len),
        output_error: Vec::with_capacity(k_len),
        virtual_outputs: Vec::with_capacity(k_len),
        virtual_inputs: Vec::with_capacity(k_len - 1),
    };
    let mut x1bar = x1bar_init;
    for (k, x) in xs.iter().enumerate() {
        let y1 = target_mode.c() * &x1bar;
        diag.state_error.push((&x1bar - ctrl.init_map() * x).norm());
        diag.output_error.push((&y1 - &traj.outputs()[k]).norm());
        diag.virtual_outputs.push(y1);
        if k + 1 < k_len {
            let u1 = ctrl.control(&x1bar, x, &traj.inputs()[k]);
            x1bar = target_mode.a() * &x1bar + target_mode.b() * &u1;
            diag.virtual_inputs.push(u1);
        }
    }
    Ok(diag)
}
