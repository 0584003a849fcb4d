//! Single-layer training and encoding.
//!
//! Three layer flavours make up a network:
//!
//! * the robust first layer fits `min ||X - D Z||_1` with Split Bregman
//!   and encodes new samples with IRLS;
//! * dense middle layers fit `min ||Y - D Z||_F^2` by alternating least
//!   squares and encode with a pseudo-inverse;
//! * the final layer fits
//!   `min ||Y - D Z||_F^2 + lambda ||Z||_1 + mu ||T - W Z||_F^2`
//!   and encodes with ISTA.
//!
//! Dictionaries are under-complete and every atom is kept at unit norm
//! (at most [`ATOM_NORM_CAP`]).

use log::warn;
use rayon::prelude::*;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::solvers::{
    self, ista, ista_lipschitz, ista_with_lipschitz, irls_l1_with_pinv, least_squares_rhs, pinv,
    soft_threshold_mat, IrlsConfig, IstaConfig, SolveReport,
};
use crate::{all_finite, random, Mat, Vector};

pub const ATOM_NORM_CAP: f64 = 1.0;

const NORM_CAP_SLACK: f64 = 1e-9;

/// One dictionary level. `activation` maps this layer's synthesis `D Z`
/// to the coefficients of the layer above it; the first layer of a network
/// uses the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub dictionary: Mat,
    pub activation: Activation,
}

impl Layer {
    pub fn new(dictionary: Mat, activation: Activation) -> Result<Self> {
        let layer = Layer {
            dictionary,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dictionary;
        if d.nrows() == 0 || d.ncols() == 0 {
            return Err(Error::format("empty dictionary"));
        }
        if d.ncols() > d.nrows() {
            return Err(Error::format(format!(
                "dictionary is {}x{}: layers must be under-complete",
                d.nrows(),
                d.ncols()
            )));
        }
        if !all_finite(d) {
            return Err(Error::numerical("dictionary has non-finite entries"));
        }
        if let Some((j, n)) = d
            .column_iter()
            .map(|c| c.norm())
            .enumerate()
            .find(|&(_, n)| n > ATOM_NORM_CAP + NORM_CAP_SLACK)
        {
            return Err(Error::format(format!(
                "atom {j} has norm {n}, above the cap {ATOM_NORM_CAP}"
            )));
        }
        Ok(())
    }
}

/// Split Bregman settings for the robust first layer.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustTrainConfig {
    /// Weight of the quadratic split penalty; distinct from the classifier
    /// weight of the final layer.
    pub mu_bregman: f64,
    pub outer_iters: usize,
    /// Dictionary/coefficient alternations per outer round.
    pub inner_iters: usize,
    /// Stop once `||P - (X - D Z)||_F / ||X||_F` drops below this.
    pub tol: f64,
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        RobustTrainConfig {
            mu_bregman: 1.0,
            outer_iters: 50,
            inner_iters: 1,
            tol: 1e-4,
        }
    }
}

/// Settings for the sparse discriminative final layer.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalTrainConfig {
    pub lambda: f64,
    /// Weight of the classification term `||T - W Z||_F^2`.
    pub mu_cls: f64,
    /// Alternation rounds.
    pub iters: usize,
    /// Budget of each coefficient update. Its `lambda` is ignored in favour
    /// of [`FinalTrainConfig::lambda`].
    pub ista: IstaConfig,
}

impl Default for FinalTrainConfig {
    fn default() -> Self {
        FinalTrainConfig {
            lambda: 0.2,
            mu_cls: 1.0,
            iters: 30,
            ista: IstaConfig::default(),
        }
    }
}

/// Result of training one layer.
#[derive(Clone, Debug)]
pub struct LayerFit {
    pub layer: Layer,
    /// Training coefficients, one column per sample.
    pub codes: Mat,
    /// Objective after initialization and after each round: `||X - DZ||_1`
    /// for the robust layer, `||Y - DZ||_F^2` for dense layers.
    pub report: SolveReport,
    /// Relative split residual `||P - (X - DZ)||_F / ||X||_F` of the last
    /// Bregman round; zero for non-robust layers.
    pub primal_residual: f64,
    /// The robust layer's final residual proxy `P`: the sparse part of the
    /// data the dictionary refused to fit.
    pub outliers: Option<Mat>,
}

/// Result of training the final layer.
#[derive(Clone, Debug)]
pub struct FinalFit {
    pub layer: Layer,
    /// Linear map from codes to class scores, `C x out_dim`.
    pub classifier: Mat,
    pub codes: Mat,
    /// Full objective after initialization and after every block update
    /// (coefficients, dictionary, classifier), in that order.
    pub block_trace: Vec<f64>,
    pub rounds: usize,
}

/// Gaussian dictionary with unit-norm columns.
pub fn init_dictionary(rows: usize, atoms: usize, seed: u64) -> Mat {
    let mut rng = random::seeded(seed);
    let mut d = random::gaussian_mat(rows, atoms, &mut rng);
    for mut col in d.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    d
}

/// Rescales every nonzero atom to norm [`ATOM_NORM_CAP`] and the matching
/// coefficient row inversely, leaving `D Z` unchanged.
pub fn normalize_atoms(d: &mut Mat, z: &mut Mat) {
    for j in 0..d.ncols() {
        let n = d.column(j).norm();
        if n > 0.0 {
            let s = n / ATOM_NORM_CAP;
            d.column_mut(j).unscale_mut(s);
            z.row_mut(j).scale_mut(s);
        }
    }
}

fn check_dims(input_dim: usize, out_dim: usize, samples: usize) -> Result<()> {
    if out_dim == 0 {
        return Err(Error::degenerate("layer width must be >= 1"));
    }
    if out_dim > input_dim {
        return Err(Error::degenerate(format!(
            "layer width {out_dim} exceeds input dimension {input_dim}"
        )));
    }
    if samples < out_dim {
        warn!("training {out_dim} atoms from only {samples} samples");
    }
    Ok(())
}

fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite entries in {what}")))
    }
}

fn l1(m: &Mat) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Robust first layer: `min_{D,Z} ||X - D Z||_1` by Split Bregman.
///
/// With `P` standing in for the residual `X - D Z` and `B` the Bregman
/// variable, each outer round performs
///
/// ```text
/// P <- soft(X - D Z + B, 1 / (2 mu))
/// D <- (X + B - P) pinv(Z)            (atoms renormalized)
/// Z <- pinv(D) (X + B - P)
/// B <- B + (X - D Z) - P
/// ```
///
/// An all-zero `X` returns the initial dictionary with zero codes.
pub fn train_robust_layer(
    x: &Mat,
    out_dim: usize,
    cfg: &RobustTrainConfig,
    seed: u64,
) -> Result<LayerFit> {
    let (m, n) = x.shape();
    check_dims(m, out_dim, n)?;
    if !(cfg.mu_bregman > 0.0) {
        return Err(Error::degenerate("mu_bregman must be > 0"));
    }
    ensure_finite(x, "robust layer input")?;

    let mut d = init_dictionary(m, out_dim, seed);
    let x_norm = x.norm();
    if x_norm == 0.0 {
        return Ok(LayerFit {
            layer: Layer::new(d, Activation::identity())?,
            codes: Mat::zeros(out_dim, n),
            report: SolveReport {
                iterations: 0,
                objective_trace: vec![0.0],
                converged: true,
            },
            primal_residual: 0.0,
            outliers: Some(Mat::zeros(m, n)),
        });
    }

    let mut z = pinv(&d)? * x;
    let mut b = Mat::zeros(m, n);
    let thresh = 1.0 / (2.0 * cfg.mu_bregman);
    let mut report = SolveReport {
        objective_trace: vec![l1(&(x - &d * &z))],
        ..Default::default()
    };
    let mut primal_residual = f64::INFINITY;
    let mut proxy = Mat::zeros(m, n);

    for it in 1..=cfg.outer_iters {
        let p = soft_threshold_mat(&(x - &d * &z + &b), thresh);
        let target = x + &b - &p;
        for _ in 0..cfg.inner_iters.max(1) {
            d = least_squares_rhs(&target, &z)?;
            normalize_atoms(&mut d, &mut z);
            z = pinv(&d)? * &target;
        }
        let fit = x - &d * &z;
        let split = &fit - &p;
        b += &split;
        ensure_finite(&b, "Bregman variable")?;
        ensure_finite(&z, "robust layer codes")?;

        primal_residual = split.norm() / x_norm;
        proxy = p;
        report.iterations = it;
        report.objective_trace.push(l1(&fit));
        if primal_residual < cfg.tol {
            report.converged = true;
            break;
        }
    }

    Ok(LayerFit {
        layer: Layer::new(d, Activation::identity())?,
        codes: z,
        report,
        primal_residual,
        outliers: Some(proxy),
    })
}

/// Dense layer: `min_{D,Z} ||Y - D Z||_F^2` by alternating least squares
/// (method of optimal directions). Each round updates the coefficients,
/// then the dictionary, then renormalizes the atoms.
pub fn train_dense_layer(
    y: &Mat,
    out_dim: usize,
    iters: usize,
    activation: Activation,
    seed: u64,
) -> Result<LayerFit> {
    let (m, n) = y.shape();
    check_dims(m, out_dim, n)?;
    ensure_finite(y, "dense layer input")?;

    let mut d = init_dictionary(m, out_dim, seed);
    let mut z = Mat::zeros(out_dim, n);
    let mut report = SolveReport {
        objective_trace: vec![y.norm_squared()],
        ..Default::default()
    };

    for it in 1..=iters {
        z = pinv(&d)? * y;
        d = least_squares_rhs(y, &z)?;
        normalize_atoms(&mut d, &mut z);
        ensure_finite(&z, "dense layer codes")?;

        let prev = report.final_objective();
        let obj = (y - &d * &z).norm_squared();
        report.iterations = it;
        report.objective_trace.push(obj);
        if (prev - obj).abs() <= 1e-12 * prev.max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
    }

    Ok(LayerFit {
        layer: Layer::new(d, activation)?,
        codes: z,
        report,
        primal_residual: 0.0,
        outliers: None,
    })
}

/// Objective of the final layer,
/// `||Y - D Z||_F^2 + lambda ||Z||_1 + mu ||T - W Z||_F^2`.
pub fn final_objective(y: &Mat, d: &Mat, z: &Mat, t: &Mat, w: &Mat, lambda: f64, mu: f64) -> f64 {
    (y - d * z).norm_squared() + lambda * l1(z) + mu * (t - w * z).norm_squared()
}

fn validate_targets(t: &Mat, n: usize) -> Result<()> {
    if t.ncols() != n {
        return Err(Error::format(format!(
            "targets have {} columns, data has {n}",
            t.ncols()
        )));
    }
    for (j, col) in t.column_iter().enumerate() {
        let ones = col.iter().filter(|&&v| v == 1.0).count();
        let zeros = col.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != col.len() {
            return Err(Error::degenerate(format!(
                "target column {j} is not a one-hot code"
            )));
        }
    }
    for (c, row) in t.row_iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::degenerate(format!(
                "class {} has no training samples",
                c + 1
            )));
        }
    }
    Ok(())
}

/// Dictionary update under the atom norm cap. The unconstrained least
/// squares solution is taken when it is feasible; otherwise projected
/// gradient descent runs from the better of the previous dictionary and the
/// projected least squares solution.
fn capped_dictionary_step(y: &Mat, z: &Mat, d_prev: &Mat) -> Result<Mat> {
    let d_ls = least_squares_rhs(y, z)?;
    let within_cap = d_ls
        .column_iter()
        .all(|c| c.norm() <= ATOM_NORM_CAP * (1.0 + 1e-12));
    if within_cap {
        return Ok(d_ls);
    }

    let project = |d: &mut Mat| {
        for mut col in d.column_iter_mut() {
            let n = col.norm();
            if n > ATOM_NORM_CAP {
                col *= ATOM_NORM_CAP / n;
            }
        }
    };
    let cost = |d: &Mat| (y - d * z).norm_squared();

    let mut d_proj = d_ls;
    project(&mut d_proj);
    let mut d = if cost(&d_proj) <= cost(d_prev) {
        d_proj
    } else {
        d_prev.clone()
    };

    let gram = z * z.transpose();
    let cross = y * z.transpose();
    let lipschitz = 2.0 * solvers::gram_max_eigenvalue(z);
    if !(lipschitz > 0.0) {
        return Ok(d);
    }
    let step = 1.0 / lipschitz;
    for _ in 0..200 {
        let grad = (&d * &gram - &cross) * 2.0;
        let mut next = &d - grad * step;
        project(&mut next);
        let moved = (&next - &d).norm();
        d = next;
        if moved <= 1e-10 * d.norm().max(1e-300) {
            break;
        }
    }
    Ok(d)
}

/// Sparse discriminative final layer: alternating minimization of
/// `||Y - D Z||_F^2 + lambda ||Z||_1 + mu ||T - W Z||_F^2`.
///
/// `targets` is the `C x n` one-hot matrix. Each round solves the stacked
/// l1 problem `[Y; sqrt(mu) T] ~ [D; sqrt(mu) W] Z` with ISTA (warm start),
/// then the dictionary under the atom norm cap, then `W = T pinv(Z)`.
pub fn train_final_layer(
    y: &Mat,
    out_dim: usize,
    targets: &Mat,
    cfg: &FinalTrainConfig,
    activation: Activation,
    seed: u64,
) -> Result<FinalFit> {
    let (m, n) = y.shape();
    check_dims(m, out_dim, n)?;
    ensure_finite(y, "final layer input")?;
    validate_targets(targets, n)?;
    if !(cfg.mu_cls > 0.0 && cfg.mu_cls.is_finite()) {
        return Err(Error::degenerate("mu_cls must be > 0"));
    }
    let ista_cfg = IstaConfig {
        lambda: cfg.lambda,
        ..cfg.ista
    };
    ista_cfg.validate()?;

    let classes = targets.nrows();
    let sqrt_mu = cfg.mu_cls.sqrt();
    let mut stacked_y = Mat::zeros(m + classes, n);
    stacked_y.rows_mut(0, m).copy_from(y);
    stacked_y.rows_mut(m, classes).copy_from(&(targets * sqrt_mu));

    let mut d = init_dictionary(m, out_dim, seed);
    let mut z = pinv(&d)? * y;
    let mut w = least_squares_rhs(targets, &z)?;
    let objective = |d: &Mat, z: &Mat, w: &Mat| {
        final_objective(y, d, z, targets, w, cfg.lambda, cfg.mu_cls)
    };
    let mut block_trace = vec![objective(&d, &z, &w)];
    let mut rounds = 0;

    for round in 1..=cfg.iters {
        let mut stacked_d = Mat::zeros(m + classes, out_dim);
        stacked_d.rows_mut(0, m).copy_from(&d);
        stacked_d.rows_mut(m, classes).copy_from(&(&w * sqrt_mu));
        let (z_new, _) = ista(&stacked_d, &stacked_y, &ista_cfg, Some(&z))?;
        z = z_new;
        block_trace.push(objective(&d, &z, &w));

        d = capped_dictionary_step(y, &z, &d)?;
        block_trace.push(objective(&d, &z, &w));

        w = least_squares_rhs(targets, &z)?;
        block_trace.push(objective(&d, &z, &w));

        ensure_finite(&z, "final layer codes")?;
        ensure_finite(&w, "classifier")?;
        rounds = round;

        let before = block_trace[block_trace.len() - 4];
        let after = block_trace[block_trace.len() - 1];
        if (before - after).abs() <= 1e-12 * before.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    Ok(FinalFit {
        layer: Layer::new(d, activation)?,
        classifier: w,
        codes: z,
        block_trace,
        rounds,
    })
}

fn check_input(layer: &Layer, len: usize) -> Result<()> {
    if len != layer.in_dim() {
        return Err(Error::format(format!(
            "input has length {len}, layer expects {}",
            layer.in_dim()
        )));
    }
    Ok(())
}

fn collect_columns(rows: usize, cols: Vec<Vector>) -> Mat {
    let mut out = Mat::zeros(rows, cols.len());
    for (j, c) in cols.into_iter().enumerate() {
        out.set_column(j, &c);
    }
    out
}

/// Least absolute deviation code `argmin_z ||x - D z||_1` (IRLS).
pub fn encode_robust(layer: &Layer, x: &Vector, cfg: &IrlsConfig) -> Result<Vector> {
    check_input(layer, x.len())?;
    let d_pinv = pinv(&layer.dictionary)?;
    Ok(irls_l1_with_pinv(&layer.dictionary, &d_pinv, x, cfg)?.0)
}

/// Column-wise [`encode_robust`], parallel over samples.
pub fn encode_robust_batch(layer: &Layer, x: &Mat, cfg: &IrlsConfig) -> Result<Mat> {
    check_input(layer, x.nrows())?;
    let d = &layer.dictionary;
    let d_pinv = pinv(d)?;
    let cols = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let col = x.column(j).into_owned();
            irls_l1_with_pinv(d, &d_pinv, &col, cfg).map(|(z, _)| z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_columns(layer.out_dim(), cols))
}

/// Least squares code `pinv(D) y`.
pub fn encode_dense(layer: &Layer, y: &Vector) -> Result<Vector> {
    check_input(layer, y.len())?;
    Ok(pinv(&layer.dictionary)? * y)
}

/// Column-wise [`encode_dense`].
pub fn encode_dense_batch(layer: &Layer, y: &Mat) -> Result<Mat> {
    check_input(layer, y.nrows())?;
    let d_pinv = pinv(&layer.dictionary)?;
    let cols = (0..y.ncols())
        .into_par_iter()
        .map(|j| &d_pinv * y.column(j).into_owned())
        .collect();
    Ok(collect_columns(layer.out_dim(), cols))
}

/// Sparse code `argmin_z ||y - D z||^2 + lambda ||z||_1` (ISTA from zero).
pub fn encode_sparse(layer: &Layer, y: &Vector, lambda: f64, cfg: &IstaConfig) -> Result<Vector> {
    check_input(layer, y.len())?;
    let lipschitz = ista_lipschitz(&layer.dictionary)?;
    sparse_column(layer, y, lambda, cfg, lipschitz)
}

fn sparse_column(
    layer: &Layer,
    y: &Vector,
    lambda: f64,
    cfg: &IstaConfig,
    lipschitz: f64,
) -> Result<Vector> {
    let cfg = IstaConfig { lambda, ..*cfg };
    cfg.validate()?;
    let y = Mat::from_column_slice(y.len(), 1, y.as_slice());
    let z0 = Mat::zeros(layer.out_dim(), 1);
    let (z, _) = ista_with_lipschitz(&layer.dictionary, &y, &cfg, z0, lipschitz)?;
    Ok(z.column(0).into_owned())
}

/// Column-wise [`encode_sparse`]; every column runs its own ISTA.
pub fn encode_sparse_batch(layer: &Layer, y: &Mat, lambda: f64, cfg: &IstaConfig) -> Result<Mat> {
    check_input(layer, y.nrows())?;
    let lipschitz = ista_lipschitz(&layer.dictionary)?;
    let cols = (0..y.ncols())
        .into_par_iter()
        .map(|j| sparse_column(layer, &y.column(j).into_owned(), lambda, cfg, lipschitz))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_columns(layer.out_dim(), cols))
}
