//! Numerical building blocks: soft thresholding, pseudo-inverse least
//! squares, spectral norm estimation, ISTA for l1-regularized least squares
//! and IRLS for least absolute deviations.
//!
//! Objectives use the squared Frobenius norm without a `1/2` factor:
//!
//! ```text
//! F(Z) = ||Y - D Z||_F^2 + lambda * ||Z||_1
//! ```
//!
//! so the ISTA step uses `L = 2 * sigma_max(D)^2` and the threshold is
//! `lambda / (2 L)`.

use log::warn;
use nalgebra::{Cholesky, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::{all_finite, random, Mat, Vector};

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Relative slack added to the ISTA Lipschitz constant.
pub const ISTA_LIPSCHITZ_SLACK: f64 = 1e-6;

pub const POWER_ITERATION_MAX_ITERS: usize = 200;
pub const POWER_ITERATION_TOL: f64 = 1e-12;

const SVD_MAX_SWEEPS: usize = 10_000;

/// Settings for [`ista`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IstaConfig {
    /// Sparsity weight on `||Z||_1`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        IstaConfig {
            lambda: 0.2,
            max_iters: 500,
            tol: 1e-7,
        }
    }
}

impl IstaConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        IstaConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::degenerate(format!(
                "ista lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::degenerate("ista max_iters must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::degenerate("ista tol must be >= 0"));
        }
        Ok(())
    }
}

/// Settings for [`irls_l1`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlsConfig {
    pub max_iters: usize,
    /// Residual floor for the weights `1 / max(|r|, eps)`; also the ridge
    /// added to every weighted normal system.
    pub eps: f64,
    /// Stop on relative change of the coefficients below this.
    pub tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            max_iters: 50,
            eps: 1e-6,
            tol: 1e-8,
        }
    }
}

/// Iteration log shared by the iterative solvers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Objective at the starting point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// `sign(x) * max(|x| - tau, 0)`.
#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_mat(m: &Mat, tau: f64) -> Mat {
    m.map(|v| soft_threshold(v, tau))
}

/// Moore-Penrose pseudo-inverse through the SVD, with the relative rank
/// cutoff [`PINV_RCOND`]. The pseudo-inverse of a zero matrix is zero.
pub fn pinv(a: &Mat) -> Result<Mat> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::degenerate("pseudo-inverse of an empty matrix"));
    }
    if !all_finite(a) {
        return Err(Error::numerical("pseudo-inverse of a non-finite matrix"));
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::numerical(format!("SVD of {rows}x{cols} matrix did not converge")))?;
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Ok(Mat::zeros(cols, rows));
    }
    svd.pseudo_inverse(PINV_RCOND * sigma_max)
        .map_err(|e| Error::numerical(format!("pseudo-inverse: {e}")))
}

/// `argmin_Z ||Y - A Z||_F^2`, minimum-norm when `A` is rank deficient.
pub fn least_squares(a: &Mat, y: &Mat) -> Result<Mat> {
    if a.nrows() != y.nrows() {
        return Err(Error::format(format!(
            "least squares: A has {} rows but Y has {}",
            a.nrows(),
            y.nrows()
        )));
    }
    Ok(pinv(a)? * y)
}

/// `argmin_D ||Y - D Z||_F^2`, i.e. `Y * pinv(Z)`. Used for dictionary
/// updates where the coefficients are held fixed.
pub fn least_squares_rhs(y: &Mat, z: &Mat) -> Result<Mat> {
    if y.ncols() != z.ncols() {
        return Err(Error::format(format!(
            "least squares: Y has {} columns but Z has {}",
            y.ncols(),
            z.ncols()
        )));
    }
    Ok(y * pinv(z)?)
}

/// Outcome of [`power_iteration`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    /// Best estimate of `sigma_max(A)^2`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `A^T A`. Convergence is declared when the Rayleigh
/// quotient changes by less than `tol` relative.
pub fn power_iteration(a: &Mat, max_iters: usize, tol: f64) -> PowerIteration {
    let k = a.ncols();
    let mut rng = random::seeded(0x5eed);
    let mut v: Vector = random::gaussian_mat(k, 1, &mut rng).column(0).into_owned();
    let nv = v.norm();
    v /= nv;

    let mut value = 0.0;
    for it in 1..=max_iters {
        let w = a.tr_mul(&(a * &v));
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return PowerIteration {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        v = w / nw;
        if it > 1 && (next - value).abs() <= tol * next.abs() {
            return PowerIteration {
                value: next.max(value),
                iterations: it,
                converged: true,
            };
        }
        value = next;
    }
    PowerIteration {
        value,
        iterations: max_iters,
        converged: false,
    }
}

/// `sigma_max(A)^2` by power iteration with the default cap and tolerance.
pub fn spectral_norm_sq(a: &Mat) -> Result<f64> {
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("spectral norm of a zero matrix"));
    }
    let est = power_iteration(a, POWER_ITERATION_MAX_ITERS, POWER_ITERATION_TOL);
    if est.converged {
        Ok(est.value)
    } else {
        Err(Error::numerical(format!(
            "power iteration did not converge in {} iterations (best estimate {:e})",
            est.iterations, est.value
        )))
    }
}

/// Largest eigenvalue of the smaller Gram matrix of `a`, from a dense
/// symmetric eigensolve.
pub(crate) fn gram_max_eigenvalue(a: &Mat) -> f64 {
    let gram = if a.nrows() >= a.ncols() {
        a.tr_mul(a)
    } else {
        a * a.transpose()
    };
    SymmetricEigen::new(gram).eigenvalues.max()
}

/// Squared spectral norm for step-size selection. Falls back to the dense
/// eigensolve when power iteration stalls on a small spectral gap.
fn step_norm_sq(a: &Mat) -> Result<f64> {
    match spectral_norm_sq(a) {
        Ok(v) => Ok(v),
        Err(Error::Numerical(_)) => Ok(gram_max_eigenvalue(a)),
        Err(e) => Err(e),
    }
}

fn lasso_objective(residual: &Mat, z: &Mat, lambda: f64) -> f64 {
    residual.norm_squared() + lambda * z.iter().map(|v| v.abs()).sum::<f64>()
}

/// Iterative soft thresholding for `min_Z ||Y - D Z||_F^2 + lambda ||Z||_1`.
///
/// Starts from `z0` (zeros when `None`). Each step is
/// `Z <- soft(Z + D^T (Y - D Z) / L, lambda / (2 L))` with
/// `L = 2 sigma_max(D)^2 (1 + 1e-6)`.
pub fn ista(d: &Mat, y: &Mat, cfg: &IstaConfig, z0: Option<&Mat>) -> Result<(Mat, SolveReport)> {
    cfg.validate()?;
    if d.nrows() != y.nrows() {
        return Err(Error::format(format!(
            "ista: D has {} rows but Y has {}",
            d.nrows(),
            y.nrows()
        )));
    }
    let z = match z0 {
        Some(z0) => {
            if z0.shape() != (d.ncols(), y.ncols()) {
                return Err(Error::format(format!(
                    "ista: initial Z is {:?}, expected {:?}",
                    z0.shape(),
                    (d.ncols(), y.ncols())
                )));
            }
            z0.clone()
        }
        None => Mat::zeros(d.ncols(), y.ncols()),
    };

    let lipschitz = ista_lipschitz(d)?;
    ista_with_lipschitz(d, y, cfg, z, lipschitz)
}

/// The step constant `L = 2 sigma_max(D)^2 (1 + 1e-6)` used by [`ista`].
pub fn ista_lipschitz(d: &Mat) -> Result<f64> {
    let l = 2.0 * step_norm_sq(d)?;
    Ok(l + ISTA_LIPSCHITZ_SLACK * l)
}

/// [`ista`] with a precomputed step constant, for callers solving many
/// problems against one dictionary.
pub(crate) fn ista_with_lipschitz(
    d: &Mat,
    y: &Mat,
    cfg: &IstaConfig,
    mut z: Mat,
    lipschitz: f64,
) -> Result<(Mat, SolveReport)> {
    let step = 1.0 / lipschitz;
    let thresh = cfg.lambda / (2.0 * lipschitz);

    let mut residual = y - d * &z;
    let mut f = lasso_objective(&residual, &z, cfg.lambda);
    if !f.is_finite() {
        return Err(Error::numerical("ista: non-finite initial objective"));
    }
    let mut report = SolveReport {
        objective_trace: vec![f],
        ..Default::default()
    };

    for it in 1..=cfg.max_iters {
        let grad = d.tr_mul(&residual);
        z.zip_apply(&grad, |zv, g| *zv = soft_threshold(*zv + step * g, thresh));
        residual = y - d * &z;
        let f_new = lasso_objective(&residual, &z, cfg.lambda);
        if !f_new.is_finite() {
            return Err(Error::numerical(format!("ista: non-finite objective at iteration {it}")));
        }
        report.objective_trace.push(f_new);
        report.iterations = it;
        let change = (f - f_new).abs() / f.max(1e-12);
        f = f_new;
        if change < cfg.tol {
            report.converged = true;
            break;
        }
    }
    Ok((z, report))
}

/// IRLS for `min_z ||y - D z||_1`, starting from the least-squares fit.
pub fn irls_l1(d: &Mat, y: &Vector, cfg: &IrlsConfig) -> Result<(Vector, SolveReport)> {
    if d.nrows() < d.ncols() {
        warn!(
            "irls_l1: dictionary is {}x{}, fewer rows than columns",
            d.nrows(),
            d.ncols()
        );
    }
    let d_pinv = pinv(d)?;
    irls_l1_with_pinv(d, &d_pinv, y, cfg)
}

/// [`irls_l1`] with a precomputed `pinv(D)` for the starting point, so batch
/// callers factor the dictionary once.
pub(crate) fn irls_l1_with_pinv(
    d: &Mat,
    d_pinv: &Mat,
    y: &Vector,
    cfg: &IrlsConfig,
) -> Result<(Vector, SolveReport)> {
    if d.nrows() != y.len() {
        return Err(Error::format(format!(
            "irls: D has {} rows but y has length {}",
            d.nrows(),
            y.len()
        )));
    }
    if !(cfg.eps > 0.0) {
        return Err(Error::degenerate("irls eps must be > 0"));
    }
    let k = d.ncols();
    let mut z: Vector = d_pinv * y;
    let mut residual = y - d * &z;
    let mut cost = residual.lp_norm(1);
    let mut report = SolveReport {
        objective_trace: vec![cost],
        ..Default::default()
    };

    for it in 1..=cfg.max_iters {
        // rows of D scaled by the weights
        let mut weighted = d.clone();
        for (mut row, r) in weighted.row_iter_mut().zip(residual.iter()) {
            row *= 1.0 / r.abs().max(cfg.eps);
        }
        let mut normal = weighted.tr_mul(d);
        for i in 0..k {
            normal[(i, i)] += cfg.eps;
        }
        let rhs = weighted.tr_mul(y);
        let z_new = match Cholesky::new(normal.clone()) {
            Some(chol) => chol.solve(&rhs),
            None => LU::new(normal).solve(&rhs).ok_or_else(|| {
                Error::numerical(format!("irls: singular weighted system at iteration {it}"))
            })?,
        };
        if !z_new.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(format!("irls: non-finite iterate at iteration {it}")));
        }
        let residual_new = y - d * &z_new;
        let cost_new = residual_new.lp_norm(1);
        report.iterations = it;
        if cost_new > cost {
            // The reweighting majorizes a smoothed l1 cost; keep the best
            // iterate once the exact cost stops improving.
            report.converged = true;
            break;
        }
        let change = (&z_new - &z).norm() / z.norm().max(1e-12);
        z = z_new;
        residual = residual_new;
        cost = cost_new;
        report.objective_trace.push(cost);
        if change < cfg.tol {
            report.converged = true;
            break;
        }
    }
    Ok((z, report))
}
