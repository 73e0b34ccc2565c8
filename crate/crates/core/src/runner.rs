//! Seeded, replicated experiment execution.
//!
//! One run per seed, each on its own role-split random streams, so any
//! scheduling (sequential or thread pool) yields identical per-seed results.
//! Traces are merged in ascending seed order before aggregation, making the
//! result set invariant to the order seeds were listed in.

use rayon::prelude::*;

use crate::agents::{run_baseline, run_multi, run_single, MultiRunConfig, RunTrace, SingleRunConfig};
use crate::config::{AlgoKind, ExperimentConfig, TMin};
use crate::diagnostics::gaussian_width_mc;
use crate::env::{Environment, GroundTruth, NoiseModel};
use crate::error::{Error, Result};
use crate::norms::{norm_value, sample_descent_direction, sample_sphere_direction, NormSpec};
use crate::rng::{stream, RunStreams, StreamRole};
use crate::stats::{pointwise_mean, pointwise_percentile, summarize_regret, SlopeFit};
use crate::truth::generate_truth;

/// Aggregated output of one experiment.
#[derive(Clone, Debug)]
pub struct ResultSet {
    /// Fully resolved configuration (defaults materialized).
    pub config: ExperimentConfig,
    /// Per-seed traces, ascending seed order.
    pub traces: Vec<RunTrace>,
    /// Warm-start length each seed actually used.
    pub resolved_t_min: Vec<(u64, usize)>,
    pub mean_cum_regret: Vec<f64>,
    pub p10_cum_regret: Vec<f64>,
    pub p90_cum_regret: Vec<f64>,
    pub mean_est_error: Vec<f64>,
    pub fit_window: (usize, usize),
    pub slope: SlopeFit,
    pub final_regret_mean: f64,
    pub final_regret_se: f64,
}

impl ResultSet {
    pub fn final_regret_ci90(&self) -> (f64, f64) {
        let half = 1.645 * self.final_regret_se;
        (self.final_regret_mean - half, self.final_regret_mean + half)
    }
}

/// Number of bootstrap resamples for the slope confidence interval.
const BOOTSTRAP_REPS: usize = 200;

/// Execute every seed of the experiment, optionally capping worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    run_experiment_with_parallelism(cfg, None)
}

pub fn run_experiment_with_parallelism(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ResultSet> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();

    let outcomes: Vec<Result<(RunTrace, usize)>> = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("could not build thread pool: {e}")))?;
            pool.install(|| seeds.par_iter().map(|&seed| run_one_seed(cfg, seed)).collect())
        }
        None => seeds.par_iter().map(|&seed| run_one_seed(cfg, seed)).collect(),
    };

    let mut traces = Vec::with_capacity(seeds.len());
    let mut resolved_t_min = Vec::with_capacity(seeds.len());
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok((trace, t_min)) => {
                resolved_t_min.push((*seed, t_min));
                traces.push(trace);
            }
            Err(e) => {
                return Err(Error::precondition(format!("seed {seed} failed: {e}")));
            }
        }
    }
    aggregate(cfg.clone(), traces, resolved_t_min)
}

fn aggregate(
    config: ExperimentConfig,
    traces: Vec<RunTrace>,
    resolved_t_min: Vec<(u64, usize)>,
) -> Result<ResultSet> {
    let horizon = config.horizon;
    let curves: Vec<Vec<f64>> = traces.iter().map(|t| t.cum_regret_curve()).collect();
    let est_curves: Vec<Vec<f64>> = traces.iter().map(|t| t.est_error_curve()).collect();
    let mean_cum_regret = pointwise_mean(&curves);
    let p10_cum_regret = pointwise_percentile(&curves, 0.10);
    let p90_cum_regret = pointwise_percentile(&curves, 0.90);
    let mean_est_error = pointwise_mean(&est_curves);

    let t_min_max = resolved_t_min.iter().map(|(_, t)| *t).max().unwrap_or(0);
    let warm = config.agent.warm_start;
    let lo = t_min_max.max(warm).max(64).min(horizon);
    let fit_window = (lo.max(1), horizon);

    let bootstrap_seed = *config.seeds.iter().min().expect("validated nonempty");
    let slope = if traces.len() >= 5 && fit_window.0 < fit_window.1 {
        summarize_regret(&curves, fit_window, BOOTSTRAP_REPS, bootstrap_seed)?
    } else {
        SlopeFit::invalid()
    };

    let finals: Vec<f64> = traces.iter().map(|t| t.final_regret()).collect();
    let n = finals.len() as f64;
    let final_regret_mean = finals.iter().sum::<f64>() / n;
    let final_regret_se = if finals.len() > 1 {
        let var = finals.iter().map(|v| (v - final_regret_mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };

    Ok(ResultSet {
        config,
        traces,
        resolved_t_min,
        mean_cum_regret,
        p10_cum_regret,
        p90_cum_regret,
        mean_est_error,
        fit_window,
        slope,
        final_regret_mean,
        final_regret_se,
    })
}

fn build_environment(cfg: &ExperimentConfig) -> Result<Environment> {
    let env = &cfg.environment;
    Ok(Environment::new(env.kind.clone(), env.strategy.clone(), env.k, env.p, env.sigma)?
        .with_info(env.adversary_info))
}

/// Execute one seed: generate the truth, resolve the warm-start length, and
/// dispatch on the configured algorithm. Returns the trace and the resolved
/// t_min (warm-start rounds) used.
pub fn run_one_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(RunTrace, usize)> {
    let truth = generate_truth(&cfg.truth, &mut stream(seed, StreamRole::Truth))?;
    let env = build_environment(cfg)?;
    let noise = NoiseModel::new(cfg.environment.noise.family, cfg.environment.noise.kappa)?;
    let mut streams = RunStreams::for_seed(seed);

    match cfg.agent.algo {
        AlgoKind::Single => {
            let spec = truth.spec().clone();
            let t_min = resolve_t_min(cfg, &spec, &truth, seed)?;
            let run_cfg = SingleRunConfig {
                t_min,
                estimator: cfg.agent.estimator,
                oracle_init: cfg.agent.oracle_init,
                record_batches: cfg.agent.record_batches,
            };
            let trace =
                run_single(&env, &truth, &spec, &run_cfg, cfg.horizon, &noise, seed, &mut streams)?;
            Ok((trace, t_min))
        }
        AlgoKind::Multi => {
            let specs = vec![truth.spec().clone(); env.k];
            let run_cfg = MultiRunConfig {
                warm_start: cfg.agent.warm_start,
                estimator: cfg.agent.estimator,
                record_batches: cfg.agent.record_batches,
            };
            let trace =
                run_multi(&env, &truth, &specs, &run_cfg, cfg.horizon, &noise, seed, &mut streams)?;
            Ok((trace, cfg.agent.warm_start))
        }
        algo => {
            let kind = algo.baseline().expect("non-baseline handled above");
            let t_min = match kind {
                crate::agents::BaselineKind::UnstructuredGreedy => {
                    let radius = 10.0 * truth.theta(0).norm();
                    let spec = NormSpec::l2(env.p, radius)?;
                    resolve_t_min(cfg, &spec, &truth, seed)?
                }
                _ => 0,
            };
            let run_cfg = SingleRunConfig {
                t_min,
                estimator: cfg.agent.estimator,
                oracle_init: false,
                record_batches: cfg.agent.record_batches,
            };
            let trace =
                run_baseline(kind, &env, &truth, &run_cfg, cfg.horizon, &noise, seed, &mut streams)?;
            Ok((trace, t_min))
        }
    }
}

/// Resolve `t_min = "auto"` to ceil((w_hat + sqrt(log log T))^2) using a
/// Monte Carlo lower bound of the error-cone width; the boundary case where
/// the truth sits strictly inside the ball falls back to full-sphere
/// directions.
fn resolve_t_min(
    cfg: &ExperimentConfig,
    spec: &NormSpec,
    truth: &GroundTruth,
    seed: u64,
) -> Result<usize> {
    match cfg.agent.t_min {
        TMin::Fixed(v) => Ok(v),
        TMin::Auto => {
            let p = spec.flat_len();
            let theta_star = truth.theta(0).clone();
            let mut rng = stream(seed, StreamRole::Diagnostics);
            let interior = norm_value(spec, &theta_star)? < spec.radius() - 1e-9;
            let width = if interior {
                gaussian_width_mc(|r| sample_sphere_direction(p, r), p, 200, 64, &mut rng)?
            } else {
                gaussian_width_mc(
                    |r| {
                        sample_descent_direction(spec, &theta_star, r)
                            .expect("radius matches truth")
                            .direction
                    },
                    p,
                    200,
                    64,
                    &mut rng,
                )?
            };
            let loglog = (cfg.horizon as f64).ln().ln().max(0.0);
            let t_min = (width.value + loglog.sqrt()).powi(2).ceil() as usize;
            Ok(t_min.min(cfg.horizon))
        }
    }
}
