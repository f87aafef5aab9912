//! Utility-neutral distortion planned off-line on the target mode.
//!
//! Over a horizon `K` the free response of the target mode stacks as
//! `Y = O_K x(1) + T_K U`. A plan `(x(1), U)` whose stacked output lies in `Ker[F]` adds
//! distortion that the affine utility `F Y + mu` cannot see.

mod lsqr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use lsqr::{lsqr, LinearOperator, LsqrConfig, LsqrOutcome};

use crate::error::{Error, Result};
use crate::model::{self, StateSpaceMode};
use crate::numerics::{self, ToleranceConfig};

/// Number of kernel draws before a plan is declared infeasible.
pub const MAX_DRAWS: usize = 16;

/// Horizons whose dense lifted matrix has at most this many entries are solved by SVD.
pub const DENSE_ENTRY_LIMIT: usize = 40_000;

/// Affine utility `f(Y) = F Y + mu` bound to a horizon.
#[derive(Clone, Debug)]
pub struct UtilitySpec {
    f: DMatrix<f64>,
    mu: DVector<f64>,
    horizon: usize,
    m: usize,
    /// Orthonormal basis of the row space of `F`, one column per direction.
    row_basis: DMatrix<f64>,
}

impl UtilitySpec {
    pub fn new(
        f: DMatrix<f64>,
        mu: DVector<f64>,
        horizon: usize,
        m: usize,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        if horizon < 2 || m == 0 {
            return Err(Error::invalid("utility needs K >= 2 and m >= 1"));
        }
        if f.ncols() != horizon * m {
            return Err(Error::invalid(format!(
                "F has {} columns, expected K*m = {}",
                f.ncols(),
                horizon * m
            )));
        }
        if f.nrows() == 0 || mu.len() != f.nrows() {
            return Err(Error::invalid(format!(
                "mu has length {}, F has {} rows",
                mu.len(),
                f.nrows()
            )));
        }
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("mu has non-finite entries"));
        }
        let row_basis = numerics::row_space_basis(&f, tol)?;
        Ok(Self {
            f,
            mu,
            horizon,
            m,
            row_basis,
        })
    }

    /// Channel-wise average over the horizon, `F = (1/K) [I_m ... I_m]`, `mu = 0`.
    pub fn average(horizon: usize, m: usize, tol: &ToleranceConfig) -> Result<Self> {
        if horizon < 2 || m == 0 {
            return Err(Error::invalid("utility needs K >= 2 and m >= 1"));
        }
        let mut f = DMatrix::zeros(m, horizon * m);
        let w = 1.0 / horizon as f64;
        for k in 0..horizon {
            for i in 0..m {
                f[(i, k * m + i)] = w;
            }
        }
        Self::new(f, DVector::zeros(m), horizon, m, tol)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.f.nrows()
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }

    /// Whether `Ker[F]` contains more than the origin.
    pub fn kernel_nontrivial(&self) -> bool {
        self.rank() < self.horizon * self.m
    }

    /// `F Y + mu` for a stacked output sequence.
    pub fn evaluate(&self, stacked_y: &DVector<f64>) -> Result<DVector<f64>> {
        if stacked_y.len() != self.f.ncols() {
            return Err(Error::invalid(format!(
                "stacked output has length {}, utility expects {}",
                stacked_y.len(),
                self.f.ncols()
            )));
        }
        Ok(&self.f * stacked_y + &self.mu)
    }

    /// `(I - F^+ F) theta` without forming the projector.
    pub fn project_onto_kernel(&self, theta: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.row_basis.tr_mul(theta);
        theta - &self.row_basis * coeffs
    }
}

/// Dense `I - F^+ F`, symmetric and idempotent with `F P = 0`.
pub fn kernel_projector(spec: &UtilitySpec, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    let f_pinv = numerics::pseudoinverse(spec.f(), tol)?;
    let km = spec.f().ncols();
    Ok(DMatrix::identity(km, km) - f_pinv * spec.f())
}

/// `O_K` held explicitly and `T_K` applied by simulation.
#[derive(Clone, Debug)]
pub struct LiftedOperators {
    mode: StateSpaceMode,
    horizon: usize,
    observability: DMatrix<f64>,
}

/// Builds `O_K = [C; CA; ...; CA^(K-1)]` row block by row block.
pub fn build_lifted_operators(target_mode: &StateSpaceMode, horizon: usize) -> Result<LiftedOperators> {
    if horizon < 2 {
        return Err(Error::invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    let (n, m) = (target_mode.n(), target_mode.m());
    let mut observability = DMatrix::zeros(horizon * m, n);
    let mut block = target_mode.c().clone();
    for k in 0..horizon {
        observability
            .view_mut((k * m, 0), (m, n))
            .copy_from(&block);
        if k + 1 < horizon {
            block = &block * target_mode.a();
        }
    }
    Ok(LiftedOperators {
        mode: target_mode.clone(),
        horizon,
        observability,
    })
}

impl LiftedOperators {
    pub fn mode(&self) -> &StateSpaceMode {
        &self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mode_id(&self) -> usize {
        self.mode.id()
    }

    pub fn observability(&self) -> &DMatrix<f64> {
        &self.observability
    }

    /// Dense block-Toeplitz `T_K`; block `(i, j)` is `C A^(i-j-1) B` for `i > j`.
    pub fn toeplitz(&self) -> DMatrix<f64> {
        let (m, l) = (self.mode.m(), self.mode.l());
        let k = self.horizon;
        let mut t = DMatrix::zeros(k * m, (k - 1) * l);
        let mut markov = Vec::with_capacity(k - 1);
        let mut ab = self.mode.b().clone();
        for _ in 0..k - 1 {
            markov.push(self.mode.c() * &ab);
            ab = self.mode.a() * ab;
        }
        for i in 1..k {
            for j in 0..i {
                t.view_mut((i * m, j * l), (m, l))
                    .copy_from(&markov[i - j - 1]);
            }
        }
        t
    }

    /// Dense `[O_K T_K]`.
    pub fn dense(&self) -> DMatrix<f64> {
        let t = self.toeplitz();
        let o = &self.observability;
        let mut g = DMatrix::zeros(o.nrows(), o.ncols() + t.ncols());
        g.view_mut((0, 0), o.shape()).copy_from(o);
        g.view_mut((0, o.ncols()), t.shape()).copy_from(&t);
        g
    }

    /// `O_K x + T_K U` by running the recursion.
    pub fn response(&self, x1: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if inputs.len() + 1 != self.horizon {
            return Err(Error::invalid(format!(
                "expected {} inputs, got {}",
                self.horizon - 1,
                inputs.len()
            )));
        }
        let traj = model::simulate_mode(&self.mode, x1, inputs)?;
        Ok(traj.stacked_outputs())
    }

    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let n = self.mode.n();
        let x = z.rows(0, n).into_owned();
        let u = model::unstack(&z.rows(n, z.len() - n).into_owned(), self.mode.l());
        (x, u)
    }
}

impl LinearOperator for LiftedOperators {
    fn nrows(&self) -> usize {
        self.horizon * self.mode.m()
    }

    fn ncols(&self) -> usize {
        self.mode.n() + (self.horizon - 1) * self.mode.l()
    }

    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let (n, m, l) = (self.mode.n(), self.mode.m(), self.mode.l());
        let (a, b, c) = (self.mode.a(), self.mode.b(), self.mode.c());
        let mut out = DVector::zeros(self.nrows());
        let mut x = z.rows(0, n).into_owned();
        let mut next = DVector::zeros(n);
        for k in 0..self.horizon {
            out.rows_mut(k * m, m).gemv(1.0, c, &x, 0.0);
            if k + 1 < self.horizon {
                next.gemv(1.0, a, &x, 0.0);
                next.gemv(1.0, b, &z.rows(n + k * l, l), 1.0);
                std::mem::swap(&mut x, &mut next);
            }
        }
        out
    }

    // costate recursion: lambda(K) = C^T w(K), lambda(k) = A^T lambda(k+1) + C^T w(k)
    fn apply_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        let (n, m, l) = (self.mode.n(), self.mode.m(), self.mode.l());
        let (a, b, c) = (self.mode.a(), self.mode.b(), self.mode.c());
        let k_len = self.horizon;
        let mut out = DVector::zeros(self.ncols());
        let mut lambda = DVector::zeros(n);
        lambda.gemv_tr(1.0, c, &w.rows((k_len - 1) * m, m), 0.0);
        let mut next = DVector::zeros(n);
        for k in (0..k_len - 1).rev() {
            out.rows_mut(n + k * l, l).gemv_tr(1.0, b, &lambda, 0.0);
            next.gemv_tr(1.0, a, &lambda, 0.0);
            next.gemv_tr(1.0, c, &w.rows(k * m, m), 1.0);
            std::mem::swap(&mut lambda, &mut next);
        }
        out.rows_mut(0, n).copy_from(&lambda);
        out
    }
}

/// Off-line distortion for the target mode: initial state and open-loop inputs whose
/// output `delta_y` lies in `Ker[F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPlan {
    pub mode_id: usize,
    pub x2_init: DVector<f64>,
    pub u2: Vec<DVector<f64>>,
    pub delta_y: DVector<f64>,
    /// Kernel parameter with `O x + T U = (I - F^+ F) theta` up to `residual`.
    pub theta: DVector<f64>,
    pub residual: f64,
    pub seed: u64,
    pub magnitude: f64,
}

impl KernelPlan {
    pub fn horizon(&self) -> usize {
        self.u2.len() + 1
    }

    /// The all-zero plan, valid for every utility.
    pub fn zero(target_mode: &StateSpaceMode, horizon: usize, seed: u64) -> Self {
        Self {
            mode_id: target_mode.id(),
            x2_init: DVector::zeros(target_mode.n()),
            u2: vec![DVector::zeros(target_mode.l()); horizon - 1],
            delta_y: DVector::zeros(horizon * target_mode.m()),
            theta: DVector::zeros(horizon * target_mode.m()),
            residual: 0.0,
            seed,
            magnitude: 0.0,
        }
    }

    /// Rebuilds a stored plan by simulation and checks that it preserves the utility.
    pub fn from_parts(
        ops: &LiftedOperators,
        spec: &UtilitySpec,
        x2_init: DVector<f64>,
        u2: Vec<DVector<f64>>,
        seed: u64,
        magnitude: f64,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        check_binding(ops, spec)?;
        let delta_y = ops.response(&x2_init, &u2)?;
        let theta = delta_y.clone();
        let residual = (&delta_y - spec.project_onto_kernel(&theta)).norm();
        let plan = Self {
            mode_id: ops.mode_id(),
            x2_init,
            u2,
            delta_y,
            theta,
            residual,
            seed,
            magnitude,
        };
        if !plan.preserves_utility(spec, tol) {
            return Err(Error::invalid(format!(
                "stored plan changes the utility (|F dY| = {:.3e})",
                (spec.f() * &plan.delta_y).norm()
            )));
        }
        Ok(plan)
    }

    /// `|F dY| <= residual_tol (1 + |F| |dY|)`.
    pub fn preserves_utility(&self, spec: &UtilitySpec, tol: &ToleranceConfig) -> bool {
        let violation = (spec.f() * &self.delta_y).norm();
        violation <= tol.residual_tol * (1.0 + spec.f().norm() * self.delta_y.norm())
    }

    /// The plan with every component multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            x2_init: &self.x2_init * alpha,
            u2: self.u2.iter().map(|u| u * alpha).collect(),
            delta_y: &self.delta_y * alpha,
            theta: &self.theta * alpha,
            residual: self.residual * alpha.abs(),
            magnitude: self.magnitude * alpha.abs(),
            ..self.clone()
        }
    }

    /// Stacked `(x2_init, U2, theta)`, the unknown vector of the homogeneous kernel system.
    pub fn stacked_unknowns(&self) -> DVector<f64> {
        let u = model::stack(&self.u2);
        let mut z = DVector::zeros(self.x2_init.len() + u.len() + self.theta.len());
        z.rows_mut(0, self.x2_init.len()).copy_from(&self.x2_init);
        z.rows_mut(self.x2_init.len(), u.len()).copy_from(&u);
        z.rows_mut(self.x2_init.len() + u.len(), self.theta.len())
            .copy_from(&self.theta);
        z
    }
}

/// Which formulation produces the plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlanMethod {
    /// Draw a kernel element, project it, then solve for the input that reaches it.
    #[default]
    Structured,
    /// Orthonormal nullspace of the dense `[O_K T_K (F^+F - I)]`; small horizons only.
    Nullspace,
}

/// Least-squares backend used by the structured path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LstsqBackend {
    /// SVD when the dense lifted matrix is small, LSQR otherwise.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanOptions {
    pub method: PlanMethod,
    pub backend: LstsqBackend,
    pub lsqr: LsqrConfig,
}

fn check_binding(ops: &LiftedOperators, spec: &UtilitySpec) -> Result<()> {
    if ops.horizon() != spec.horizon() || ops.mode().m() != spec.m() {
        return Err(Error::invalid(format!(
            "utility is bound to (K, m) = ({}, {}), operators to ({}, {})",
            spec.horizon(),
            spec.m(),
            ops.horizon(),
            ops.mode().m()
        )));
    }
    Ok(())
}

/// Finds `(x2_init, U2)` with `O_K x2_init + T_K U2` in `Ker[F]` and norm `magnitude`.
pub fn solve_utility_invariance(
    ops: &LiftedOperators,
    spec: &UtilitySpec,
    magnitude: f64,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<KernelPlan> {
    solve_utility_invariance_with(ops, spec, magnitude, seed, tol, &PlanOptions::default())
}

pub fn solve_utility_invariance_with(
    ops: &LiftedOperators,
    spec: &UtilitySpec,
    magnitude: f64,
    seed: u64,
    tol: &ToleranceConfig,
    opts: &PlanOptions,
) -> Result<KernelPlan> {
    check_binding(ops, spec)?;
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(Error::invalid("magnitude must be finite and non-negative"));
    }
    if magnitude == 0.0 {
        return Ok(KernelPlan::zero(ops.mode(), ops.horizon(), seed));
    }
    if !spec.kernel_nontrivial() {
        return Err(Error::TrivialUtilityKernel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match opts.method {
        PlanMethod::Structured => structured_plan(ops, spec, magnitude, seed, tol, opts, &mut rng),
        PlanMethod::Nullspace => nullspace_plan(ops, spec, magnitude, seed, tol, &mut rng),
    }
}

fn standard_normal(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

fn structured_plan(
    ops: &LiftedOperators,
    spec: &UtilitySpec,
    magnitude: f64,
    seed: u64,
    tol: &ToleranceConfig,
    opts: &PlanOptions,
    rng: &mut ChaCha8Rng,
) -> Result<KernelPlan> {
    let km = ops.nrows();
    let dense = match opts.backend {
        LstsqBackend::Dense => true,
        LstsqBackend::Iterative => false,
        LstsqBackend::Auto => ops.nrows() * ops.ncols() <= DENSE_ENTRY_LIMIT,
    };
    let dense_pinv = if dense {
        Some(numerics::pseudoinverse(&ops.dense(), tol)?)
    } else {
        None
    };
    let accept = tol.residual_tol * (1.0 + magnitude);
    let mut best = f64::INFINITY;
    for _ in 0..MAX_DRAWS {
        let theta = standard_normal(km, rng);
        let projected = spec.project_onto_kernel(&theta);
        let pnorm = projected.norm();
        if pnorm <= 1e-12 * theta.norm() {
            continue;
        }
        let scale = magnitude / pnorm;
        let target = projected * scale;
        let z = match &dense_pinv {
            Some(pinv) => pinv * &target,
            None => lsqr(ops, &target, &opts.lsqr).x,
        };
        let (x2_init, u2) = ops.split(&z);
        let delta_y = ops.response(&x2_init, &u2)?;
        let residual = (&delta_y - &target).norm();
        if residual <= accept {
            return Ok(KernelPlan {
                mode_id: ops.mode_id(),
                x2_init,
                u2,
                delta_y,
                theta: theta * scale,
                residual,
                seed,
                magnitude,
            });
        }
        best = best.min(residual);
    }
    Err(Error::InfeasibleInvariance {
        residual: best,
        attempts: MAX_DRAWS,
    })
}

/// Dense `[O_K T_K (F^+F - I)]`.
pub fn kernel_system(ops: &LiftedOperators, spec: &UtilitySpec, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    check_binding(ops, spec)?;
    let g = ops.dense();
    let p = kernel_projector(spec, tol)?;
    let mut m = DMatrix::zeros(g.nrows(), g.ncols() + p.ncols());
    m.view_mut((0, 0), g.shape()).copy_from(&g);
    m.view_mut((0, g.ncols()), p.shape()).copy_from(&(-p));
    Ok(m)
}

fn nullspace_plan(
    ops: &LiftedOperators,
    spec: &UtilitySpec,
    magnitude: f64,
    seed: u64,
    tol: &ToleranceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<KernelPlan> {
    let system = kernel_system(ops, spec, tol)?;
    let basis = numerics::nullspace_basis(&system, tol)?;
    let n_free = ops.ncols();
    let mut best = f64::INFINITY;
    if basis.ncols() > 0 {
        for _ in 0..MAX_DRAWS {
            let v = &basis * standard_normal(basis.ncols(), rng);
            let (x, u) = ops.split(&v.rows(0, n_free).into_owned());
            let response = ops.response(&x, &u)?;
            let rnorm = response.norm();
            if rnorm <= 1e-12 * v.norm() {
                continue;
            }
            let scale = magnitude / rnorm;
            let v = v * scale;
            let (x2_init, u2) = ops.split(&v.rows(0, n_free).into_owned());
            let theta = v.rows(n_free, v.len() - n_free).into_owned();
            let delta_y = ops.response(&x2_init, &u2)?;
            let residual = (&delta_y - spec.project_onto_kernel(&theta)).norm();
            if residual <= tol.residual_tol * (1.0 + magnitude) {
                return Ok(KernelPlan {
                    mode_id: ops.mode_id(),
                    x2_init,
                    u2,
                    delta_y,
                    theta,
                    residual,
                    seed,
                    magnitude,
                });
            }
            best = best.min(residual);
        }
    }
    Err(Error::InfeasibleInvariance {
        residual: best,
        attempts: MAX_DRAWS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn scalar(a: f64) -> StateSpaceMode {
        StateSpaceMode::new(2, dmatrix![a], dmatrix![1.0], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn lifted_scalar_k3() {
        let ops = build_lifted_operators(&scalar(0.8), 3).unwrap();
        let o: Vec<f64> = ops.observability().iter().copied().collect();
        assert!((o[0] - 1.0).abs() < 1e-15 && (o[1] - 0.8).abs() < 1e-15 && (o[2] - 0.64).abs() < 1e-15);
        let t = ops.toeplitz();
        let expected = dmatrix![0.0, 0.0; 1.0, 0.0; 0.8, 1.0];
        assert!((t - expected).abs().max() < 1e-15);
    }

    #[test]
    fn lifted_k2_and_first_block() {
        let mode = StateSpaceMode::new(
            1,
            dmatrix![0.5, 0.1; 0.0, 0.3],
            dmatrix![1.0; 2.0],
            dmatrix![1.0, -1.0],
        )
        .unwrap();
        let ops = build_lifted_operators(&mode, 2).unwrap();
        let t = ops.toeplitz();
        assert_eq!(t.shape(), (2, 1));
        assert_eq!(t[(0, 0)], 0.0);
        assert!((t[(1, 0)] - (mode.c() * mode.b())[(0, 0)]).abs() < 1e-15);
        assert_eq!(ops.observability().rows(0, 1), mode.c().rows(0, 1));
        assert!(matches!(build_lifted_operators(&mode, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn operator_matches_dense_and_adjoint() {
        let mode = StateSpaceMode::new(
            1,
            dmatrix![0.5, 0.1; -0.2, 0.3],
            dmatrix![1.0, 0.0; 2.0, 1.0],
            dmatrix![1.0, -1.0],
        )
        .unwrap();
        let ops = build_lifted_operators(&mode, 6).unwrap();
        let g = ops.dense();
        let z = DVector::from_fn(ops.ncols(), |i, _| (i as f64 * 0.7).sin());
        let w = DVector::from_fn(ops.nrows(), |i, _| (i as f64 * 1.3).cos());
        assert!((ops.apply(&z) - &g * &z).norm() < 1e-13);
        assert!((ops.apply_transpose(&w) - g.tr_mul(&w)).norm() < 1e-13);
    }

    #[test]
    fn projector_of_half_sum() {
        let spec = UtilitySpec::new(dmatrix![0.5, 0.5], DVector::zeros(1), 2, 1, &tol()).unwrap();
        let p = kernel_projector(&spec, &tol()).unwrap();
        assert!((p - dmatrix![0.5, -0.5; -0.5, 0.5]).abs().max() < 1e-15);
    }

    #[test]
    fn projector_of_invertible_is_zero() {
        let f = dmatrix![2.0, 1.0; 1.0, 3.0];
        let spec = UtilitySpec::new(f, DVector::zeros(2), 2, 1, &tol()).unwrap();
        assert!(!spec.kernel_nontrivial());
        assert!(numerics::max_abs(&kernel_projector(&spec, &tol()).unwrap()) < 1e-15);
    }

    #[test]
    fn projector_of_average() {
        let k = 5;
        let spec = UtilitySpec::average(k, 1, &tol()).unwrap();
        let p = kernel_projector(&spec, &tol()).unwrap();
        // F+ is a column of ones because F F^T = 1/K
        let oracle = DMatrix::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
        assert!((&p - oracle).abs().max() < 1e-14);
        assert!((&p * DVector::from_element(k, 1.0)).norm() < 1e-14);
        let theta = DVector::from_fn(k, |i, _| i as f64);
        assert!((spec.project_onto_kernel(&theta) - &p * &theta).norm() < 1e-13);
    }

    #[test]
    fn average_shorthand_for_two_channels() {
        let spec = UtilitySpec::average(3, 2, &tol()).unwrap();
        assert_eq!(spec.f().shape(), (2, 6));
        let y = DVector::from_vec(vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        let f = spec.evaluate(&y).unwrap();
        assert!((f[0] - 2.0).abs() < 1e-15 && (f[1] - 20.0).abs() < 1e-14);
    }

    #[test]
    fn zero_magnitude_gives_zero_plan() {
        let ops = build_lifted_operators(&scalar(0.8), 3).unwrap();
        let spec = UtilitySpec::average(3, 1, &tol()).unwrap();
        let plan = solve_utility_invariance(&ops, &spec, 0.0, 1, &tol()).unwrap();
        assert_eq!(plan.x2_init.norm(), 0.0);
        assert!(plan.u2.iter().all(|u| u.norm() == 0.0));
        assert_eq!(plan.delta_y.norm(), 0.0);
    }

    #[test]
    fn scalar_sum_zero_plan() {
        let ops = build_lifted_operators(&scalar(0.8), 3).unwrap();
        let spec = UtilitySpec::average(3, 1, &tol()).unwrap();
        // hand-built plan: x = 1, U = (0, -2.44) gives Y = (1, 0.8, -1.8)
        let hand = ops
            .response(&DVector::from_element(1, 1.0), &[DVector::from_element(1, 0.0), DVector::from_element(1, -2.44)])
            .unwrap();
        assert!((hand - DVector::from_vec(vec![1.0, 0.8, -1.8])).norm() < 1e-14);
        let plan = solve_utility_invariance(&ops, &spec, 1.0, 7, &tol()).unwrap();
        assert!(plan.delta_y.sum().abs() < 1e-9);
        assert!(plan.residual < 1e-9);
        assert!((plan.delta_y.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invertible_utility_rejects_nonzero_plan() {
        let ops = build_lifted_operators(&scalar(0.8), 2).unwrap();
        let spec =
            UtilitySpec::new(dmatrix![2.0, 1.0; 1.0, 3.0], DVector::zeros(2), 2, 1, &tol()).unwrap();
        assert!(matches!(
            solve_utility_invariance(&ops, &spec, 1.0, 0, &tol()),
            Err(Error::TrivialUtilityKernel)
        ));
    }

    #[test]
    fn unreachable_kernel_is_infeasible() {
        // output never sees the input and the free response is a fixed direction
        let dead = StateSpaceMode::new(
            1,
            dmatrix![0.5, 0.0; 0.0, 0.5],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let ops = build_lifted_operators(&dead, 4).unwrap();
        let spec = UtilitySpec::new(
            dmatrix![1.0, 0.0, 0.0, 0.0],
            DVector::zeros(1),
            4,
            1,
            &tol(),
        )
        .unwrap();
        // reachable outputs are multiples of (1, .5, .25, .125); none has a zero first entry
        for method in [PlanMethod::Structured, PlanMethod::Nullspace] {
            let opts = PlanOptions {
                method,
                ..PlanOptions::default()
            };
            let err = solve_utility_invariance_with(&ops, &spec, 1.0, 3, &tol(), &opts);
            assert!(matches!(err, Err(Error::InfeasibleInvariance { .. })), "{method:?}: {err:?}");
        }
    }

    #[test]
    fn binding_mismatch_rejected() {
        let ops = build_lifted_operators(&scalar(0.8), 3).unwrap();
        let spec = UtilitySpec::average(4, 1, &tol()).unwrap();
        assert!(matches!(
            solve_utility_invariance(&ops, &spec, 1.0, 0, &tol()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn seeded_plans_are_reproducible() {
        let ops = build_lifted_operators(&scalar(0.8), 6).unwrap();
        let spec = UtilitySpec::average(6, 1, &tol()).unwrap();
        let a = solve_utility_invariance(&ops, &spec, 2.0, 42, &tol()).unwrap();
        let b = solve_utility_invariance(&ops, &spec, 2.0, 42, &tol()).unwrap();
        let c = solve_utility_invariance(&ops, &spec, 2.0, 43, &tol()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.delta_y, c.delta_y);
    }

    #[test]
    fn iterative_backend_agrees_with_dense() {
        let ops = build_lifted_operators(&scalar(0.8), 40).unwrap();
        let spec = UtilitySpec::average(40, 1, &tol()).unwrap();
        let run = |backend| {
            let opts = PlanOptions {
                backend,
                ..PlanOptions::default()
            };
            solve_utility_invariance_with(&ops, &spec, 3.0, 5, &tol(), &opts).unwrap()
        };
        let dense = run(LstsqBackend::Dense);
        let iterative = run(LstsqBackend::Iterative);
        assert!((dense.delta_y - &iterative.delta_y).norm() < 1e-9);
        assert!((dense.x2_init - iterative.x2_init).norm() < 1e-9);
    }

    #[test]
    fn stored_plan_round_trip_checks_utility() {
        let ops = build_lifted_operators(&scalar(0.8), 5).unwrap();
        let spec = UtilitySpec::average(5, 1, &tol()).unwrap();
        let plan = solve_utility_invariance(&ops, &spec, 1.0, 9, &tol()).unwrap();
        let back = KernelPlan::from_parts(&ops, &spec, plan.x2_init.clone(), plan.u2.clone(), 9, 1.0, &tol())
            .unwrap();
        assert!((back.delta_y - &plan.delta_y).norm() < 1e-12);
        let bad_u = vec![DVector::from_element(1, 1.0); 4];
        assert!(KernelPlan::from_parts(&ops, &spec, DVector::zeros(1), bad_u, 9, 1.0, &tol()).is_err());
    }
}
