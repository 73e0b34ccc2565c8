//! Monte Carlo estimators for the geometric and probabilistic quantities the
//! regret analysis is built on: Gaussian widths of error cones, restricted
//! minimum eigenvalues of designs, conditional margin probabilities, the
//! variance of argmax-selected Gaussians, and max-Gaussian tail bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ContextBatch;
use crate::error::{Error, Result};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    #[serde(rename = "n")]
    pub n_samples: usize,
}

impl McEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        McEstimate { value: mean, std_error: (var / n as f64).sqrt(), n_samples: n }
    }
}

/// Lower-bound estimate of the Gaussian width E[sup_u <g, u>] of a direction
/// set, using `directions` fresh draws from `sampler` per Gaussian.
pub fn gaussian_width_mc<R, F>(
    mut sampler: F,
    p: usize,
    n: usize,
    directions: usize,
    rng: &mut R,
) -> Result<McEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> DVector<f64>,
{
    if n < 100 {
        return Err(Error::precondition("gaussian_width_mc requires n >= 100"));
    }
    if directions == 0 {
        return Err(Error::precondition("gaussian_width_mc requires at least one direction"));
    }
    let mut sups = Vec::with_capacity(n);
    for _ in 0..n {
        let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut sup = f64::NEG_INFINITY;
        for _ in 0..directions {
            let u = sampler(rng);
            let dot = g.dot(&u);
            if dot > sup {
                sup = dot;
            }
        }
        sups.push(sup);
    }
    Ok(McEstimate::from_samples(&sups))
}

/// Minimum of (1/T)||Z u||^2 over the supplied unit directions: an upper
/// bound on the restricted infimum, exact over the direction set.
pub fn restricted_min_eigenvalue(z: &DMatrix<f64>, directions: &[DVector<f64>]) -> Result<f64> {
    if directions.is_empty() {
        return Err(Error::precondition("restricted_min_eigenvalue requires directions"));
    }
    let t = z.nrows() as f64;
    let mut min_value = f64::INFINITY;
    for u in directions {
        if u.len() != z.ncols() {
            return Err(Error::Dimension {
                context: "restricted_min_eigenvalue direction",
                expected: z.ncols(),
                actual: u.len(),
            });
        }
        let value = (z * u).norm_squared() / t;
        if value < min_value {
            min_value = value;
        }
    }
    Ok(min_value)
}

/// Exact sampler for eta ~ N(0, 1) conditioned on eta >= a: plain rejection
/// below a = 1, exponential-proposal rejection above.
fn sample_truncated_std_normal<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 1.0 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x >= a {
                return x;
            }
        }
    }
    let lambda = (a + (a * a + 4.0).sqrt()) / 2.0;
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let x = a - u.ln() / lambda;
        let accept: f64 = rng.gen_range(0.0..1.0);
        if accept <= (-(x - lambda).powi(2) / 2.0).exp() {
            return x;
        }
    }
}

/// Margin probability P(eta >= r + sigma^2/r | eta >= r) for
/// eta ~ N(0, sigma^2), estimated from `n` conditional samples.
pub fn margin_probability_mc<R: Rng + ?Sized>(
    sigma: f64,
    r: f64,
    n: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    margin_probability_mc_with(sigma, r, sigma * sigma / r, n, rng)
}

/// Margin probability with an explicit offset:
/// P(eta >= r + alpha | eta >= r).
pub fn margin_probability_mc_with<R: Rng + ?Sized>(
    sigma: f64,
    r: f64,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if !(r > 0.0) || !(sigma > 0.0) {
        return Err(Error::precondition("margin_probability_mc requires r > 0 and sigma > 0"));
    }
    if n < 10_000 {
        return Err(Error::precondition("margin_probability_mc requires n >= 10^4"));
    }
    let a = r / sigma;
    // Beyond ~38 sigmas the conditional tail underflows f64 entirely.
    if a > 38.0 {
        return Err(Error::SamplingTooRare);
    }
    let threshold = (r + alpha) / sigma;
    let mut hits = 0usize;
    for _ in 0..n {
        if sample_truncated_std_normal(a, rng) >= threshold {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n as f64;
    let std_error = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    Ok(McEstimate { value: p_hat, std_error, n_samples: n })
}

/// Sample variance (with its standard error) of the Gaussian component of
/// the argmax arm: draw g_1..g_k ~ N(0, sigma^2), select
/// i* = argmax_i(g_i + shift_i), record z = g_{i*}.
pub fn argmax_gaussian_variance_mc<R: Rng + ?Sized>(
    k: usize,
    sigma: f64,
    shifts: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if k < 1 {
        return Err(Error::precondition("argmax_gaussian_variance_mc requires k >= 1"));
    }
    if shifts.len() != k {
        return Err(Error::Dimension {
            context: "argmax shifts",
            expected: k,
            actual: shifts.len(),
        });
    }
    if n < 10_000 {
        return Err(Error::precondition("argmax_gaussian_variance_mc requires n >= 10^4"));
    }
    let mut selected = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        let mut best_g = 0.0;
        for (i, shift) in shifts.iter().enumerate() {
            let g = sigma * rng.sample::<f64, _>(StandardNormal);
            let score = g + shift;
            if score > best_score {
                best_score = score;
                best = i;
                best_g = g;
            }
        }
        let _ = best;
        selected.push(best_g);
    }
    let n_f = n as f64;
    let mean = selected.iter().sum::<f64>() / n_f;
    let var = selected.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_f - 1.0);
    let m4 = selected.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n_f;
    let se = ((m4 - var * var).max(0.0) / n_f).sqrt();
    Ok(McEstimate { value: var, std_error: se, n_samples: n })
}

/// Result of the max-Gaussian tail check.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub pass: bool,
    pub threshold: f64,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

/// Estimate P(max of k draws <= sqrt(2) sigma (sqrt(log k) + sqrt(log 1/delta)))
/// and check it clears 1 - 2 delta (minus Monte Carlo slack).
pub fn max_gaussian_tail_check<R: Rng + ?Sized>(
    k: usize,
    sigma: f64,
    delta: f64,
    n: usize,
    rng: &mut R,
) -> Result<TailCheck> {
    if k < 1 {
        return Err(Error::precondition("max_gaussian_tail_check requires k >= 1"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::precondition("max_gaussian_tail_check requires 0 < delta < 1/2"));
    }
    if n < 1000 {
        return Err(Error::precondition("max_gaussian_tail_check requires n >= 1000"));
    }
    let threshold = 2.0_f64.sqrt() * sigma * ((k as f64).ln().sqrt() + (1.0 / delta).ln().sqrt());
    let mut hits = 0usize;
    for _ in 0..n {
        let max = (0..k)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .fold(f64::NEG_INFINITY, f64::max);
        if max <= threshold {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n as f64;
    let std_error = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    let estimate = McEstimate { value: p_hat, std_error, n_samples: n };
    Ok(TailCheck { pass: p_hat >= 1.0 - 2.0 * delta - 3.0 * std_error, threshold, estimate })
}

/// Empirical regret-decomposition constant: the max of |<x, v>| over all
/// stored contexts and all supplied directions.
pub fn beta_estimate(batches: &[ContextBatch], directions: &[DVector<f64>]) -> Result<f64> {
    if batches.is_empty() || directions.is_empty() {
        return Err(Error::precondition("beta_estimate requires contexts and directions"));
    }
    let mut beta: f64 = 0.0;
    for batch in batches {
        for x in &batch.contexts {
            for v in directions {
                if v.len() != x.len() {
                    return Err(Error::Dimension {
                        context: "beta_estimate direction",
                        expected: x.len(),
                        actual: v.len(),
                    });
                }
                beta = beta.max(x.dot(v).abs());
            }
        }
    }
    Ok(beta)
}
