//! Constrained least-squares estimation with SVD preconditioning.
//!
//! At each episode boundary the per-episode design matrix Z and reward
//! vector y are preconditioned: with Z/sqrt(T) = U D V^T, the transform
//! F = U D^+ U^T equalizes every retained singular value of the design,
//! and the parameter is the minimizer of (1/2T)||F y - F Z theta||^2 over
//! the constraint ball, found by projected gradient descent with exact
//! projections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{norm_value, project_ball, NormSpec};

/// One episode's worth of observations: chosen contexts as rows, rewards.
#[derive(Clone, Debug)]
pub struct DesignBlock {
    z: DMatrix<f64>,
    y: DVector<f64>,
}

impl DesignBlock {
    pub fn new(z: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if z.nrows() != y.len() {
            return Err(Error::Dimension {
                context: "design block rows vs rewards",
                expected: z.nrows(),
                actual: y.len(),
            });
        }
        Ok(DesignBlock { z, y })
    }

    pub fn from_rows(rows: &[DVector<f64>], rewards: &[f64]) -> Result<Self> {
        if rows.len() != rewards.len() {
            return Err(Error::Dimension {
                context: "design rows vs rewards",
                expected: rows.len(),
                actual: rewards.len(),
            });
        }
        if rows.is_empty() {
            return Err(Error::precondition("design block must be nonempty"));
        }
        let p = rows[0].len();
        let z = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Ok(DesignBlock { z, y: DVector::from_row_slice(rewards) })
    }

    pub fn episode_len(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

/// The preconditioner F = U D^+ U^T held in factored form; T x T dense
/// storage would be wasteful for long episodes.
#[derive(Clone, Debug)]
pub struct PufferTransform {
    u: DMatrix<f64>,
    inv_singulars: DVector<f64>,
}

impl PufferTransform {
    pub fn rank(&self) -> usize {
        self.inv_singulars.len()
    }

    pub fn apply_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return DVector::zeros(v.len());
        }
        let mut coeffs = self.u.transpose() * v;
        coeffs.component_mul_assign(&self.inv_singulars);
        &self.u * coeffs
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(m.nrows(), m.ncols());
        }
        let mut coeffs = self.u.transpose() * m;
        for (i, mut row) in coeffs.row_iter_mut().enumerate() {
            row.scale_mut(self.inv_singulars[i]);
        }
        &self.u * coeffs
    }

    pub fn to_dense(&self, t: usize) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(t, t);
        }
        let mut scaled = self.u.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col.scale_mut(self.inv_singulars[i]);
        }
        scaled * self.u.transpose()
    }
}

/// Output of the preconditioning step.
#[derive(Clone, Debug)]
pub struct PufferResult {
    pub z_tilde: DMatrix<f64>,
    pub y_tilde: DVector<f64>,
    pub transform: PufferTransform,
    /// Number of singular values retained.
    pub rank: usize,
    /// Number of singular values below tolerance and dropped.
    pub dropped_singulars: usize,
}

/// Solver configuration; surfaces in experiment JSON under `"estimator"`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub max_iters: usize,
    /// Iterate-movement stopping tolerance.
    pub tol: f64,
    /// Relative singular-value drop tolerance for the preconditioner.
    pub sv_tol: f64,
    /// Precondition with the SVD transform; off solves on the raw design.
    pub puffer: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { max_iters: 2000, tol: 1e-9, sv_tol: 1e-10, puffer: true }
    }
}

/// Result of one constrained estimation.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub theta_hat: DVector<f64>,
    pub iterations: usize,
    /// Objective decrease at the last iterate.
    pub final_gap: f64,
    pub puffer_rank: usize,
    pub constraint_active: bool,
}

/// Precondition a design block. Singular values at or below
/// `tol * sigma_max` are dropped (pseudo-inverse); an all-zero design yields
/// a rank-0 result rather than an error.
pub fn puffer_transform(block: &DesignBlock, tol: f64) -> Result<PufferResult> {
    let t = block.episode_len();
    if t < 1 {
        return Err(Error::precondition("puffer_transform requires episode_len >= 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("sv tolerance must be positive, got {tol}")));
    }
    if block.z.iter().any(|v| !v.is_finite()) || block.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("puffer_transform input"));
    }
    let p = block.dim();
    let sqrt_t = (t as f64).sqrt();
    let scaled = &block.z / sqrt_t;
    let svd = scaled.svd(true, true);
    let singulars = &svd.singular_values;
    let max_sv = singulars.iter().cloned().fold(0.0_f64, f64::max);
    let total = singulars.len();

    if max_sv <= 0.0 {
        let transform = PufferTransform {
            u: DMatrix::zeros(t, 0),
            inv_singulars: DVector::zeros(0),
        };
        return Ok(PufferResult {
            z_tilde: DMatrix::zeros(t, p),
            y_tilde: DVector::zeros(t),
            transform,
            rank: 0,
            dropped_singulars: total,
        });
    }

    let keep: Vec<usize> = (0..total).filter(|&i| singulars[i] > tol * max_sv).collect();
    let rank = keep.len();
    let u_full = svd.u.as_ref().expect("svd with u");
    let v_t_full = svd.v_t.as_ref().expect("svd with v_t");
    let u_r = u_full.select_columns(keep.iter());
    let v_t_r = v_t_full.select_rows(keep.iter());
    let inv_singulars = DVector::from_iterator(rank, keep.iter().map(|&i| 1.0 / singulars[i]));

    let transform = PufferTransform { u: u_r.clone(), inv_singulars };
    // F Z = sqrt(T) U_r V_r^T exactly, so the transformed design has unit
    // retained singular values by construction.
    let z_tilde = (&u_r * v_t_r) * sqrt_t;
    let y_tilde = transform.apply_vector(&block.y);

    Ok(PufferResult {
        z_tilde,
        y_tilde,
        transform,
        rank,
        dropped_singulars: total - rank,
    })
}

/// Numerical rank of Z/sqrt(T) under the same relative drop rule the
/// preconditioner uses.
fn design_rank(z: &DMatrix<f64>, t: usize, sv_tol: f64) -> usize {
    let singulars = (z / (t as f64).sqrt()).singular_values();
    let max_sv = singulars.iter().cloned().fold(0.0_f64, f64::max);
    if max_sv <= 0.0 {
        return 0;
    }
    singulars.iter().filter(|&&s| s > sv_tol * max_sv).count()
}

/// Minimize (1/2T)||y - Z theta||^2 subject to the norm-ball constraint by
/// projected gradient descent with constant step 1/L, starting from zero.
pub fn constrained_least_squares(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &NormSpec,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    constrained_least_squares_observed(z, y, spec, cfg, |_| {})
}

pub(crate) fn constrained_least_squares_observed(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &NormSpec,
    cfg: &EstimatorConfig,
    mut on_objective: impl FnMut(f64),
) -> Result<EstimateResult> {
    let t = z.nrows();
    if t < 1 {
        return Err(Error::precondition("constrained_least_squares requires at least one row"));
    }
    if z.ncols() != spec.flat_len() {
        return Err(Error::Dimension {
            context: "design columns vs parameter length",
            expected: spec.flat_len(),
            actual: z.ncols(),
        });
    }
    if y.len() != t {
        return Err(Error::Dimension {
            context: "rewards vs design rows",
            expected: t,
            actual: y.len(),
        });
    }
    let p = z.ncols();
    let t_f = t as f64;
    // Quadratic form: f(theta) = c - b.theta + theta.G.theta/2.
    let gram = (z.transpose() * z) / t_f;
    let b = (z.transpose() * y) / t_f;
    let c = y.norm_squared() / (2.0 * t_f);
    let lipschitz = gram
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);

    let objective = |theta: &DVector<f64>| -> f64 {
        c - b.dot(theta) + 0.5 * (&gram * theta).dot(theta)
    };

    let mut theta = DVector::zeros(p);
    if lipschitz <= 0.0 {
        // Rank-0 design: gradient from zero is zero.
        let active = constraint_is_active(spec, &theta)?;
        return Ok(EstimateResult {
            theta_hat: theta,
            iterations: 0,
            final_gap: 0.0,
            puffer_rank: 0,
            constraint_active: active,
        });
    }

    let step = 1.0 / lipschitz;
    let mut obj = objective(&theta);
    on_objective(obj);
    let mut iterations = 0;
    let mut final_gap = 0.0;
    for _ in 0..cfg.max_iters {
        let grad = &gram * &theta - &b;
        let next = project_ball(spec, &(&theta - &grad * step))?;
        let next_obj = objective(&next);
        if !next_obj.is_finite() {
            return Err(Error::SolverDiverged);
        }
        debug_assert!(
            next_obj <= obj + 1e-9 * (1.0 + obj.abs()),
            "projected-gradient objective increased: {obj} -> {next_obj}"
        );
        on_objective(next_obj);
        let movement = (&next - &theta).norm();
        final_gap = obj - next_obj;
        obj = next_obj;
        theta = next;
        iterations += 1;
        if movement < cfg.tol {
            break;
        }
    }

    let active = constraint_is_active(spec, &theta)?;
    Ok(EstimateResult {
        theta_hat: theta,
        iterations,
        final_gap,
        puffer_rank: design_rank(z, t, cfg.sv_tol),
        constraint_active: active,
    })
}

fn constraint_is_active(spec: &NormSpec, theta: &DVector<f64>) -> Result<bool> {
    let value = norm_value(spec, theta)?;
    Ok(value >= spec.radius() - 1e-6 * spec.radius().max(1.0))
}

/// Precondition then solve: the estimation step invoked at every episode
/// boundary. Deterministic given inputs (zero initialization).
pub fn estimate_parameter(
    block: &DesignBlock,
    spec: &NormSpec,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    if block.episode_len() < 1 {
        return Err(Error::precondition("estimate_parameter requires a nonempty block"));
    }
    if cfg.puffer {
        let puffer = puffer_transform(block, cfg.sv_tol)?;
        let mut result = constrained_least_squares(&puffer.z_tilde, &puffer.y_tilde, spec, cfg)?;
        result.puffer_rank = puffer.rank;
        Ok(result)
    } else {
        if block.z.iter().any(|v| !v.is_finite()) || block.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimate_parameter input"));
        }
        constrained_least_squares(&block.z, &block.y, spec, cfg)
    }
}
