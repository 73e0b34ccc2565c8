//! Aggregate curves and regret-scaling statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted log-log slope of the mean cumulative-regret curve with a
/// seed-bootstrap 90% confidence interval. `valid` is false when the fit is
/// undefined (e.g. zero regret everywhere), in which case the numbers are
/// NaN rather than a crash.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub valid: bool,
}

impl SlopeFit {
    pub fn invalid() -> Self {
        SlopeFit { slope: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN, valid: false }
    }
}

/// Pointwise mean of equal-length curves.
pub fn pointwise_mean(curves: &[Vec<f64>]) -> Vec<f64> {
    if curves.is_empty() {
        return Vec::new();
    }
    let t = curves[0].len();
    let n = curves.len() as f64;
    (0..t).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / n).collect()
}

/// Pointwise nearest-rank percentile (q in [0, 1]) of equal-length curves.
pub fn pointwise_percentile(curves: &[Vec<f64>], q: f64) -> Vec<f64> {
    if curves.is_empty() {
        return Vec::new();
    }
    let t = curves[0].len();
    let n = curves.len();
    let rank = (((q * n as f64).ceil() as usize).max(1) - 1).min(n - 1);
    (0..t)
        .map(|i| {
            let mut vals: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals[rank]
        })
        .collect()
}

/// OLS slope of log(curve[t]) on log(t) for 1-based t in `[window.0, window.1]`.
/// Non-positive curve points are skipped; fewer than two usable points make
/// the fit invalid.
pub fn fit_loglog_slope(curve: &[f64], window: (usize, usize)) -> SlopeFit {
    let (lo, hi) = window;
    if lo < 1 || hi > curve.len() || lo >= hi {
        return SlopeFit::invalid();
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in lo..=hi {
        let y = curve[t - 1];
        if y > 0.0 {
            xs.push((t as f64).ln());
            ys.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return SlopeFit::invalid();
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    if var == 0.0 {
        return SlopeFit::invalid();
    }
    let slope = cov / var;
    SlopeFit { slope, ci_lo: slope, ci_hi: slope, valid: slope.is_finite() }
}

/// Fit the log-log regret slope over the window from per-seed cumulative
/// regret curves, with a 90% bootstrap confidence interval over seeds.
pub fn summarize_regret(
    curves: &[Vec<f64>],
    window: (usize, usize),
    bootstrap_reps: usize,
    bootstrap_seed: u64,
) -> Result<SlopeFit> {
    if curves.len() < 5 {
        return Err(Error::precondition(format!(
            "summarize_regret requires at least 5 traces, got {}",
            curves.len()
        )));
    }
    let t = curves[0].len();
    if curves.iter().any(|c| c.len() != t) {
        return Err(Error::precondition("all traces must share the horizon"));
    }
    if window.0 < 1 || window.1 > t || window.0 >= window.1 {
        return Err(Error::precondition(format!(
            "fit window {:?} must satisfy 1 <= lo < hi <= {t}",
            window
        )));
    }

    let mean = pointwise_mean(curves);
    let point = fit_loglog_slope(&mean, window);
    if !point.valid {
        return Ok(SlopeFit::invalid());
    }

    let mut rng = ChaCha20Rng::seed_from_u64(bootstrap_seed);
    let mut slopes = Vec::with_capacity(bootstrap_reps);
    for _ in 0..bootstrap_reps {
        let resampled: Vec<Vec<f64>> =
            (0..curves.len()).map(|_| curves[rng.gen_range(0..curves.len())].clone()).collect();
        let fit = fit_loglog_slope(&pointwise_mean(&resampled), window);
        if fit.valid {
            slopes.push(fit.slope);
        }
    }
    if slopes.len() < 2 {
        return Ok(SlopeFit { slope: point.slope, ci_lo: f64::NAN, ci_hi: f64::NAN, valid: true });
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| -> f64 {
        let rank = (((q * slopes.len() as f64).ceil() as usize).max(1) - 1).min(slopes.len() - 1);
        slopes[rank]
    };
    Ok(SlopeFit { slope: point.slope, ci_lo: pick(0.05), ci_hi: pick(0.95), valid: true })
}

/// One-sided paired comparison: mean(a - b) > 0 tested at the given
/// one-sided t critical value. Returns the t statistic.
pub fn paired_t_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::precondition("paired_t_statistic requires equal-length samples, n >= 2"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
    }
    Ok(mean / (var / n).sqrt())
}
