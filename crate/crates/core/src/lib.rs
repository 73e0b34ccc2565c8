//! Greedy algorithms for smoothed linear contextual bandits with structured
//! parameters.
//!
//! The library has three layers:
//!
//! - numerics: atomic norms and exact ball projections ([`norms`]), and the
//!   SVD-preconditioned constrained least-squares estimator ([`estimator`]);
//! - simulation: context/reward environments ([`env`], [`truth`]) and the
//!   single- and multi-parameter greedy agents plus baselines ([`agents`]);
//! - harness: Monte Carlo diagnostics ([`diagnostics`]), declarative
//!   experiment configs ([`config`]), the seeded replicated runner
//!   ([`runner`]), aggregate statistics ([`stats`]), and CSV/JSON
//!   persistence ([`output`]).
//!
//! Every random draw comes from a `(seed, role)` ChaCha20 stream
//! ([`rng`]), which makes runs bit-reproducible and keeps perturbation
//! sequences aligned across paired configurations.

pub mod agents;
pub mod config;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod estimator;
pub mod norms;
pub mod output;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod truth;

pub use agents::{
    run_baseline, run_multi, run_single, select_arm, ArmEpisodeStats, BaselineKind,
    BoundaryRecord, MultiRunConfig, RoundRecord, RunTrace, SingleRunConfig,
};
pub use config::{
    apply_seed_override, load_config, load_config_str, AgentConfig, AlgoKind, EnvConfig,
    ExperimentConfig, OutputConfig, OutputFormat, TMin, SEED_OVERRIDE_VAR,
};
pub use diagnostics::{
    argmax_gaussian_variance_mc, beta_estimate, gaussian_width_mc, margin_probability_mc,
    margin_probability_mc_with, max_gaussian_tail_check, restricted_min_eigenvalue, McEstimate,
    TailCheck,
};
pub use env::{
    adversary_step, reward, AdversaryInfo, ContextBatch, EnvKind, Environment, GroundTruth,
    HistoryView, NoiseFamily, NoiseModel, Strategy, TruthMode,
};
pub use error::{Error, Result};
pub use estimator::{
    constrained_least_squares, estimate_parameter, puffer_transform, DesignBlock, EstimateResult,
    EstimatorConfig, PufferResult, PufferTransform,
};
pub use norms::{
    norm_value, project_ball, sample_descent_direction, sample_error_direction,
    sample_error_direction_with, sample_sphere_direction, ErrorSetSample, NormFamily, NormSpec,
    Shape,
};
pub use output::{emit_results, load_summary, load_traces_from_dir, read_trace_csv, Summary};
pub use rng::{stream, RunStreams, StreamRole};
pub use runner::{run_experiment, run_experiment_with_parallelism, run_one_seed, ResultSet};
pub use stats::{
    fit_loglog_slope, paired_t_statistic, pointwise_mean, pointwise_percentile, summarize_regret,
    SlopeFit,
};
pub use truth::{generate_truth, TruthConfig};
