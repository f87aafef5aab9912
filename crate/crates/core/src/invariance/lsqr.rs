//! LSQR (Paige & Saunders) for minimum-norm least squares with a matrix-free operator.
//!
//! Started from zero, the iterates stay in the row space of the operator, so the limit is
//! the minimum-norm minimizer of `||A x - b||`.

use nalgebra::DVector;

pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsqrConfig {
    pub atol: f64,
    pub btol: f64,
    /// Iteration cap; `None` means `4 * min(nrows, ncols) + 50`, clamped to 20 000.
    pub max_iter: Option<usize>,
}

impl Default for LsqrConfig {
    fn default() -> Self {
        Self {
            atol: 1e-14,
            btol: 1e-14,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LsqrOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Recurrence estimate of `||A x - b||`; callers should recompute the true residual.
    pub residual_estimate: f64,
}

pub fn lsqr<Op: LinearOperator + ?Sized>(op: &Op, b: &DVector<f64>, cfg: &LsqrConfig) -> LsqrOutcome {
    let n = op.ncols();
    let mut x = DVector::zeros(n);
    let max_iter = cfg
        .max_iter
        .unwrap_or_else(|| (4 * op.nrows().min(n) + 50).min(20_000));

    let bnorm = b.norm();
    if bnorm == 0.0 {
        return LsqrOutcome {
            x,
            iterations: 0,
            residual_estimate: 0.0,
        };
    }
    let mut u = b / bnorm;
    let mut v = op.apply_transpose(&u);
    let mut alpha = v.norm();
    if alpha == 0.0 {
        // b is orthogonal to the range
        return LsqrOutcome {
            x,
            iterations: 0,
            residual_estimate: bnorm,
        };
    }
    v /= alpha;
    let mut w = v.clone();
    let mut phibar = bnorm;
    let mut rhobar = alpha;
    let mut anorm_sq = 0.0;

    let mut itn = 0;
    while itn < max_iter {
        itn += 1;
        u = op.apply(&v) - alpha * &u;
        let beta = u.norm();
        if beta > 0.0 {
            u /= beta;
        }
        anorm_sq += alpha * alpha + beta * beta;

        v = op.apply_transpose(&u) - beta * &v;
        alpha = v.norm();
        if alpha > 0.0 {
            v /= alpha;
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        x.axpy(phi / rho, &w, 1.0);
        w = &v - (theta / rho) * &w;

        let rnorm = phibar;
        let arnorm = alpha * c.abs() * phibar;
        let anorm = anorm_sq.sqrt();
        let xnorm = x.norm();
        if rnorm <= cfg.btol * bnorm + cfg.atol * anorm * xnorm {
            break;
        }
        if rnorm == 0.0 || arnorm <= cfg.atol * anorm * rnorm {
            break;
        }
        if alpha == 0.0 {
            break;
        }
    }
    LsqrOutcome {
        x,
        iterations: itn,
        residual_estimate: phibar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};

    struct Dense(DMatrix<f64>);

    impl LinearOperator for Dense {
        fn nrows(&self) -> usize {
            self.0.nrows()
        }
        fn ncols(&self) -> usize {
            self.0.ncols()
        }
        fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.0 * x
        }
        fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
            self.0.tr_mul(y)
        }
    }

    #[test]
    fn underdetermined_returns_min_norm() {
        let op = Dense(dmatrix![1.0, 1.0]);
        let out = lsqr(&op, &DVector::from_vec(vec![2.0]), &LsqrConfig::default());
        assert!((out.x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn overdetermined_returns_least_squares() {
        let op = Dense(dmatrix![1.0; 1.0]);
        let out = lsqr(&op, &DVector::from_vec(vec![0.0, 2.0]), &LsqrConfig::default());
        assert!((out.x[0] - 1.0).abs() < 1e-12);
        assert!((out.residual_estimate - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_matches_pseudoinverse() {
        let a = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 6.0; 1.0, 0.0, 1.0; 0.0, 1.0, 1.0];
        let b = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let expected = a.clone().pseudo_inverse(1e-12).unwrap() * &b;
        let out = lsqr(&Dense(a), &b, &LsqrConfig::default());
        assert!((out.x - expected).norm() < 1e-10);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let out = lsqr(&Dense(DMatrix::identity(3, 3)), &DVector::zeros(3), &LsqrConfig::default());
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x.norm(), 0.0);
    }
}
