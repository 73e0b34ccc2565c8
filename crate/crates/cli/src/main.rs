//! `bandit-sim`: run experiments, expose the Monte Carlo diagnostics, and
//! summarize emitted traces.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use smoothed_bandits::{
    apply_seed_override, argmax_gaussian_variance_mc, emit_results, gaussian_width_mc,
    load_config, load_summary, load_traces_from_dir, margin_probability_mc,
    margin_probability_mc_with, max_gaussian_tail_check, restricted_min_eigenvalue,
    run_experiment_with_parallelism, sample_error_direction_with, sample_sphere_direction,
    stream, summarize_regret, Environment, Error, HistoryView, McEstimate, NormFamily, NormSpec,
    StreamRole, TruthConfig, TruthMode,
};

#[derive(Parser)]
#[command(name = "bandit-sim", version, about = "Smoothed linear contextual bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write trace CSVs plus a summary.
    Run(RunArgs),
    /// Monte Carlo diagnostics; each prints a JSON object with value,
    /// std_error, and n.
    Diag(DiagArgs),
    /// Recompute the regret-scaling summary from emitted trace CSVs.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-seed parallelism.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct DiagArgs {
    #[command(subcommand)]
    which: DiagCommand,
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Gaussian-width lower bound of an error cone.
    Width(ParamArg),
    /// Conditional margin probability.
    Margin(ParamArg),
    /// Restricted minimum eigenvalue of a simulated greedy design.
    Eigen(ParamArg),
    /// Variance of the argmax-selected Gaussian.
    Argmaxvar(ParamArg),
    /// Max-Gaussian tail bound check.
    Tail(ParamArg),
}

#[derive(Args)]
struct ParamArg {
    /// JSON object of parameters for the estimator.
    #[arg(long)]
    params: String,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Directory holding trace_seed*.csv files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Fit window "lo,hi" (1-based, inclusive); defaults to the window
    /// recorded in summary.json, else [64, T].
    #[arg(long)]
    window: Option<String>,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let config_error = e.downcast_ref::<Error>().map(Error::is_config).unwrap_or(false);
            if config_error {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Diag(args) => diag(args),
        Command::Summarize(args) => summarize(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(replaced) = apply_seed_override(&mut cfg)? {
        eprintln!("seed override active: replacing {replaced:?} with {:?}", cfg.seeds);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.display().to_string();
    }
    let rs = run_experiment_with_parallelism(&cfg, args.parallel)?;
    let out_dir = cfg.output.dir.clone();
    let written = emit_results(&rs, &out_dir)?;
    println!(
        "{}",
        serde_json::json!({
            "out_dir": out_dir,
            "traces": rs.traces.len(),
            "final_regret_mean": rs.final_regret_mean,
            "slope": if rs.slope.valid { Some(rs.slope.slope) } else { None },
            "files": written.len(),
        })
    );
    Ok(())
}

fn parse_params<T: for<'de> Deserialize<'de>>(raw: &str) -> anyhow::Result<T> {
    serde_json::from_str(raw).map_err(|e| Error::config(format!("bad --params: {e}")).into())
}

fn print_estimate(est: &McEstimate, extra: serde_json::Value) -> anyhow::Result<()> {
    let mut value = serde_json::to_value(est)?;
    if let (Some(obj), Some(extra_obj)) = (value.as_object_mut(), extra.as_object()) {
        for (k, v) in extra_obj {
            obj.insert(k.clone(), v.clone());
        }
    }
    println!("{value}");
    Ok(())
}

fn default_seed() -> u64 {
    0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WidthParams {
    family: NormFamily,
    p: usize,
    #[serde(default)]
    sparsity: Option<usize>,
    #[serde(default)]
    rank: Option<usize>,
    #[serde(default)]
    rows: Option<usize>,
    n: usize,
    directions: usize,
    #[serde(default = "default_seed")]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginParams {
    sigma: f64,
    r: f64,
    n: usize,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default = "default_seed")]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenParams {
    k: usize,
    p: usize,
    sigma: f64,
    rounds: usize,
    n_directions: usize,
    family: NormFamily,
    #[serde(default)]
    sparsity: Option<usize>,
    #[serde(default)]
    rank: Option<usize>,
    #[serde(default)]
    rows: Option<usize>,
    #[serde(default = "default_seed")]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgmaxVarParams {
    k: usize,
    sigma: f64,
    #[serde(default)]
    shifts: Option<Vec<f64>>,
    n: usize,
    #[serde(default = "default_seed")]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TailParams {
    k: usize,
    sigma: f64,
    delta: f64,
    n: usize,
    #[serde(default = "default_seed")]
    seed: u64,
}

/// Build the error-cone direction sampler for a freshly drawn truth of the
/// requested family.
fn width_sampler(
    family: NormFamily,
    p: usize,
    sparsity: Option<usize>,
    rank: Option<usize>,
    rows: Option<usize>,
    seed: u64,
) -> anyhow::Result<(NormSpec, nalgebra::DVector<f64>)> {
    let truth_cfg = TruthConfig {
        mode: TruthMode::Single,
        p,
        k: 1,
        family,
        sparsity,
        rank,
        rows,
    };
    let truth = smoothed_bandits::generate_truth(&truth_cfg, &mut stream(seed, StreamRole::Truth))?;
    Ok((truth.spec().clone(), truth.theta(0).clone()))
}

fn diag(args: DiagArgs) -> anyhow::Result<()> {
    match args.which {
        DiagCommand::Width(arg) => {
            let params: WidthParams = parse_params(&arg.params)?;
            let (spec, theta) =
                width_sampler(params.family, params.p, params.sparsity, params.rank, params.rows, params.seed)?;
            let mut rng = stream(params.seed, StreamRole::Diagnostics);
            let est = gaussian_width_mc(
                |r| {
                    sample_error_direction_with(&spec, &theta, 0, r)
                        .expect("truth radius matches spec")
                        .direction
                },
                params.p,
                params.n,
                params.directions,
                &mut rng,
            )?;
            print_estimate(&est, serde_json::json!({}))
        }
        DiagCommand::Margin(arg) => {
            let params: MarginParams = parse_params(&arg.params)?;
            let mut rng = stream(params.seed, StreamRole::Diagnostics);
            let est = match params.alpha {
                Some(alpha) => {
                    margin_probability_mc_with(params.sigma, params.r, alpha, params.n, &mut rng)?
                }
                None => margin_probability_mc(params.sigma, params.r, params.n, &mut rng)?,
            };
            print_estimate(&est, serde_json::json!({}))
        }
        DiagCommand::Eigen(arg) => {
            let params: EigenParams = parse_params(&arg.params)?;
            let (spec, theta) =
                width_sampler(params.family, params.p, params.sparsity, params.rank, params.rows, params.seed)?;
            let env = Environment::gaussian(params.k, params.p, params.sigma)?;
            let mut ctx = stream(params.seed, StreamRole::Contexts);
            let mut pert = stream(params.seed, StreamRole::Perturbations);
            let mut agent_rng = stream(params.seed, StreamRole::Agent);
            let theta_hat = sample_sphere_direction(params.p, &mut agent_rng);
            let mut rows = Vec::with_capacity(params.rounds);
            for t in 1..=params.rounds {
                let batch = env.generate_contexts(t, &HistoryView::empty(), &mut ctx, &mut pert)?;
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (i, x) in batch.contexts.iter().enumerate() {
                    let score = x.dot(&theta_hat);
                    if score > best_score {
                        best_score = score;
                        best = i;
                    }
                }
                rows.push(batch.contexts[best].clone());
            }
            let z = nalgebra::DMatrix::from_fn(params.rounds, params.p, |i, j| rows[i][j]);
            let mut diag_rng = stream(params.seed, StreamRole::Diagnostics);
            let directions: Vec<nalgebra::DVector<f64>> = (0..params.n_directions)
                .map(|_| {
                    sample_error_direction_with(&spec, &theta, 0, &mut diag_rng)
                        .expect("truth radius matches spec")
                        .direction
                })
                .collect();
            let value = restricted_min_eigenvalue(&z, &directions)?;
            let est = McEstimate { value, std_error: 0.0, n_samples: params.n_directions };
            print_estimate(&est, serde_json::json!({}))
        }
        DiagCommand::Argmaxvar(arg) => {
            let params: ArgmaxVarParams = parse_params(&arg.params)?;
            let shifts = params.shifts.unwrap_or_else(|| vec![0.0; params.k]);
            let mut rng = stream(params.seed, StreamRole::Diagnostics);
            let est = argmax_gaussian_variance_mc(params.k, params.sigma, &shifts, params.n, &mut rng)?;
            print_estimate(&est, serde_json::json!({}))
        }
        DiagCommand::Tail(arg) => {
            let params: TailParams = parse_params(&arg.params)?;
            let mut rng = stream(params.seed, StreamRole::Diagnostics);
            let check = max_gaussian_tail_check(params.k, params.sigma, params.delta, params.n, &mut rng)?;
            print_estimate(
                &check.estimate,
                serde_json::json!({"pass": check.pass, "threshold": check.threshold}),
            )
        }
    }
}

fn summarize(args: SummarizeArgs) -> anyhow::Result<()> {
    let traces = load_traces_from_dir(&args.input)?;
    let horizon = traces[0].1.len();
    let window = match &args.window {
        Some(raw) => {
            let parts: Vec<&str> = raw.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::config("--window must be \"lo,hi\"").into());
            }
            let lo = parts[0].trim().parse::<usize>().map_err(|e| Error::config(e.to_string()))?;
            let hi = parts[1].trim().parse::<usize>().map_err(|e| Error::config(e.to_string()))?;
            (lo, hi)
        }
        None => match load_summary(&args.input) {
            Ok(summary) => (summary.fit_window[0], summary.fit_window[1]),
            Err(_) => (64.min(horizon.saturating_sub(1)).max(1), horizon),
        },
    };
    let curves: Vec<Vec<f64>> =
        traces.iter().map(|(_, rounds)| rounds.iter().map(|r| r.cum_regret).collect()).collect();
    let boot_seed = traces.iter().map(|(s, _)| *s).min().unwrap_or(0);
    let fit = summarize_regret(&curves, window, 200, boot_seed)?;
    let finals: Vec<f64> =
        curves.iter().map(|c| c.last().copied().unwrap_or(0.0)).collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    println!(
        "{}",
        serde_json::json!({
            "traces": traces.len(),
            "horizon": horizon,
            "fit_window": [window.0, window.1],
            "slope": if fit.valid { Some(fit.slope) } else { None },
            "slope_ci": [fit.ci_lo, fit.ci_hi],
            "final_regret_mean": mean,
        })
    );
    Ok(())
}
