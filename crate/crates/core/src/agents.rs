//! The greedy bandit agents and their run loops.
//!
//! Single-parameter: doubling episodes with the estimate frozen within an
//! episode and re-fit at each boundary from exactly the previous episode's
//! data. Episode 1 covers rounds 1-2 (round 1 is absorbed into the first
//! printed episode range); episode e >= 2 covers rounds 2^(e-1)+1 .. 2^e,
//! so estimates refresh entering rounds 3, 5, 9, 17, ...
//!
//! Multi-parameter: a round-robin warm start of T0 rounds (T0/k per arm)
//! followed by greedy play with per-arm episodes that double independently;
//! each re-fit consumes only the arm's just-closed episode buffer.
//!
//! Agents see contexts, rewards, and the constraint radius inside their
//! `NormSpec` — never the ground-truth parameters. The run loops own the
//! truth for reward generation and regret accounting.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{reward, ContextBatch, Environment, GroundTruth, HistoryView, NoiseModel, TruthMode};
use crate::error::{Error, Result};
use crate::estimator::{estimate_parameter, DesignBlock, EstimatorConfig};
use crate::norms::NormSpec;
use crate::rng::RunStreams;

/// One simulated round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    /// Episode of the deciding estimate (chosen arm's episode in the multi
    /// setting; 0 during warm start and for baselines without episodes).
    pub episode: usize,
    /// 0-based chosen arm.
    pub chosen: usize,
    /// 0-based truly optimal arm.
    pub optimal: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// l2 error of the estimate in force for the chosen arm.
    pub est_error: f64,
}

/// Estimation event at an episode boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRecord {
    /// Round entering which the new estimate applies.
    pub t: usize,
    /// Arm whose estimate was refreshed (0 in the single setting).
    pub arm: usize,
    /// Episode the new estimate governs.
    pub episode: usize,
    /// Rows in the block that produced the estimate.
    pub episode_len: usize,
    pub est_error: f64,
    pub puffer_rank: usize,
    pub iterations: usize,
}

/// Per-arm, per-episode selection accounting for the multi setting:
/// `chosen_rounds` counts pulls of the arm in its episode, `optimal_missed`
/// counts rounds in the same span where the arm was truly optimal but a
/// different arm was pulled.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmEpisodeStats {
    pub arm: usize,
    pub episode: usize,
    pub chosen_rounds: usize,
    pub optimal_missed: usize,
}

/// Full record of one seeded run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub boundaries: Vec<BoundaryRecord>,
    pub arm_episodes: Vec<ArmEpisodeStats>,
    /// Stored context batches, present when the run was asked to record them.
    pub batches: Vec<ContextBatch>,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn cum_regret_curve(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.cum_regret).collect()
    }

    pub fn est_error_curve(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.est_error).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }
}

/// Greedy arm choice: argmax over arms of the estimated reward, ties broken
/// by lowest index. `estimates` holds one shared vector or one per arm.
pub fn select_arm(estimates: &[DVector<f64>], batch: &ContextBatch) -> Result<usize> {
    let k = batch.k();
    if estimates.len() != 1 && estimates.len() != k {
        return Err(Error::Dimension {
            context: "select_arm estimates",
            expected: k,
            actual: estimates.len(),
        });
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..k {
        let estimate = if estimates.len() == 1 { &estimates[0] } else { &estimates[i] };
        let score = batch.contexts[i].dot(estimate);
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

fn argmax_truth(truth: &GroundTruth, batch: &ContextBatch) -> (usize, f64) {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..batch.k() {
        let score = batch.contexts[i].dot(truth.theta(i));
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    (best, best_score)
}

/// Episode of round `t` under the absorbed doubling schedule.
pub fn episode_index_single(t: usize) -> usize {
    if t <= 2 {
        1
    } else {
        (usize::BITS - (t - 1).leading_zeros()) as usize
    }
}

fn is_single_boundary(t: usize) -> bool {
    t >= 3 && (t - 1).is_power_of_two()
}

/// Single-parameter agent configuration.
#[derive(Clone, Debug)]
pub struct SingleRunConfig {
    /// Rounds of uniform-random arm choice before greedy play begins.
    pub t_min: usize,
    pub estimator: EstimatorConfig,
    /// Debug mode: freeze the estimate at the true parameter, no re-fits.
    pub oracle_init: bool,
    /// Keep every context batch in the trace.
    pub record_batches: bool,
}

impl Default for SingleRunConfig {
    fn default() -> Self {
        SingleRunConfig {
            t_min: 0,
            estimator: EstimatorConfig::default(),
            oracle_init: false,
            record_batches: false,
        }
    }
}

/// Multi-parameter agent configuration.
#[derive(Clone, Debug)]
pub struct MultiRunConfig {
    /// Warm-start length T0; must be divisible by k.
    pub warm_start: usize,
    pub estimator: EstimatorConfig,
    pub record_batches: bool,
}

/// Baseline policies sharing the trace contract of the greedy runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Uniform random arm each round.
    RandomPolicy,
    /// Clairvoyant greedy on the true parameters.
    OracleGreedy,
    /// Single-parameter greedy with an effectively inactive l2 ball of
    /// radius 10 * ||theta*||_2.
    UnstructuredGreedy,
}

struct SingleAgent {
    spec: NormSpec,
    est_cfg: EstimatorConfig,
    t_min: usize,
    frozen: bool,
    estimate: DVector<f64>,
    buffer_rows: Vec<DVector<f64>>,
    buffer_y: Vec<f64>,
}

struct AgentUpdate {
    episode: usize,
    episode_len: usize,
    puffer_rank: usize,
    iterations: usize,
}

impl SingleAgent {
    fn new(spec: NormSpec, est_cfg: EstimatorConfig, t_min: usize, initial: Option<DVector<f64>>) -> Self {
        let p = spec.flat_len();
        let frozen = initial.is_some();
        SingleAgent {
            spec,
            est_cfg,
            t_min,
            frozen,
            estimate: initial.unwrap_or_else(|| DVector::zeros(p)),
            buffer_rows: Vec::new(),
            buffer_y: Vec::new(),
        }
    }

    fn maybe_reestimate(&mut self, t: usize) -> Result<Option<AgentUpdate>> {
        if self.frozen || !is_single_boundary(t) {
            return Ok(None);
        }
        let block = DesignBlock::from_rows(&self.buffer_rows, &self.buffer_y)?;
        let fitted = estimate_parameter(&block, &self.spec, &self.est_cfg)?;
        self.estimate = fitted.theta_hat;
        self.buffer_rows.clear();
        self.buffer_y.clear();
        Ok(Some(AgentUpdate {
            episode: episode_index_single(t),
            episode_len: block.episode_len(),
            puffer_rank: fitted.puffer_rank,
            iterations: fitted.iterations,
        }))
    }

    fn select<R: Rng + ?Sized>(&self, t: usize, batch: &ContextBatch, rng: &mut R) -> Result<usize> {
        if t <= self.t_min {
            Ok(rng.gen_range(0..batch.k()))
        } else {
            select_arm(std::slice::from_ref(&self.estimate), batch)
        }
    }

    fn observe(&mut self, context: DVector<f64>, y: f64) {
        if !self.frozen {
            self.buffer_rows.push(context);
            self.buffer_y.push(y);
        }
    }
}

struct MultiAgent {
    specs: Vec<NormSpec>,
    est_cfg: EstimatorConfig,
    warm_start: usize,
    k: usize,
    estimates: Vec<DVector<f64>>,
    episodes: Vec<usize>,
    /// Target episode length T_{i,e}; meaningful after the warm start.
    targets: Vec<usize>,
    counters: Vec<usize>,
    buffers: Vec<(Vec<DVector<f64>>, Vec<f64>)>,
}

impl MultiAgent {
    fn new(specs: Vec<NormSpec>, est_cfg: EstimatorConfig, warm_start: usize) -> Self {
        let k = specs.len();
        let p = specs[0].flat_len();
        MultiAgent {
            specs,
            est_cfg,
            warm_start,
            k,
            estimates: vec![DVector::zeros(p); k],
            episodes: vec![0; k],
            targets: vec![usize::MAX; k],
            counters: vec![0; k],
            buffers: vec![(Vec::new(), Vec::new()); k],
        }
    }

    fn select<R: Rng + ?Sized>(&self, t: usize, batch: &ContextBatch, _rng: &mut R) -> Result<usize> {
        if t <= self.warm_start {
            Ok((t - 1) % self.k)
        } else {
            select_arm(&self.estimates, batch)
        }
    }

    fn refit_arm(&mut self, arm: usize) -> Result<AgentUpdate> {
        let (rows, ys) = &self.buffers[arm];
        let block = DesignBlock::from_rows(rows, ys)?;
        let fitted = estimate_parameter(&block, &self.specs[arm], &self.est_cfg)?;
        self.estimates[arm] = fitted.theta_hat;
        let len = block.episode_len();
        self.buffers[arm].0.clear();
        self.buffers[arm].1.clear();
        self.episodes[arm] += 1;
        Ok(AgentUpdate {
            episode: self.episodes[arm],
            episode_len: len,
            puffer_rank: fitted.puffer_rank,
            iterations: fitted.iterations,
        })
    }

    /// Record an observation; returns the re-fits this round triggered.
    fn observe(&mut self, t: usize, arm: usize, context: DVector<f64>, y: f64) -> Result<Vec<(usize, AgentUpdate)>> {
        self.buffers[arm].0.push(context);
        self.buffers[arm].1.push(y);
        let mut updates = Vec::new();
        if t == self.warm_start {
            let per_arm = self.warm_start / self.k;
            for i in 0..self.k {
                let update = self.refit_arm(i)?;
                self.targets[i] = 2 * per_arm;
                self.counters[i] = 0;
                updates.push((i, update));
            }
        } else if t > self.warm_start {
            self.counters[arm] += 1;
            if self.counters[arm] == self.targets[arm] {
                let update = self.refit_arm(arm)?;
                self.targets[arm] *= 2;
                self.counters[arm] = 0;
                updates.push((arm, update));
            }
        }
        Ok(updates)
    }
}

struct TraceBuilder {
    seed: u64,
    record_batches: bool,
    rounds: Vec<RoundRecord>,
    boundaries: Vec<BoundaryRecord>,
    arm_episodes: Vec<ArmEpisodeStats>,
    batches: Vec<ContextBatch>,
    chosen: Vec<usize>,
    rewards: Vec<f64>,
    cum_regret: f64,
}

impl TraceBuilder {
    fn new(seed: u64, record_batches: bool, horizon: usize) -> Self {
        TraceBuilder {
            seed,
            record_batches,
            rounds: Vec::with_capacity(horizon),
            boundaries: Vec::new(),
            arm_episodes: Vec::new(),
            batches: Vec::new(),
            chosen: Vec::new(),
            rewards: Vec::new(),
            cum_regret: 0.0,
        }
    }

    fn push_round(
        &mut self,
        t: usize,
        episode: usize,
        chosen: usize,
        optimal: usize,
        y: f64,
        inst_regret: f64,
        est_error: f64,
        batch: ContextBatch,
    ) {
        self.cum_regret += inst_regret;
        self.rounds.push(RoundRecord {
            t,
            episode,
            chosen,
            optimal,
            reward: y,
            inst_regret,
            cum_regret: self.cum_regret,
            est_error,
        });
        self.chosen.push(chosen);
        self.rewards.push(y);
        if self.record_batches {
            self.batches.push(batch);
        }
    }

    fn finish(self) -> RunTrace {
        RunTrace {
            seed: self.seed,
            rounds: self.rounds,
            boundaries: self.boundaries,
            arm_episodes: self.arm_episodes,
            batches: self.batches,
        }
    }
}

fn check_run_inputs(env: &Environment, truth: &GroundTruth, horizon: usize) -> Result<()> {
    if horizon < 1 {
        return Err(Error::config("horizon must be at least 1"));
    }
    if env.p != truth.dim() {
        return Err(Error::config(format!(
            "environment dimension {} does not match truth dimension {}",
            env.p,
            truth.dim()
        )));
    }
    if truth.mode() == TruthMode::Multi && truth.arms() != env.k {
        return Err(Error::config(format!(
            "environment has {} arms but truth has {}",
            env.k,
            truth.arms()
        )));
    }
    Ok(())
}

/// Run the single-parameter greedy algorithm for `horizon` rounds.
pub fn run_single(
    env: &Environment,
    truth: &GroundTruth,
    spec: &NormSpec,
    cfg: &SingleRunConfig,
    horizon: usize,
    noise: &NoiseModel,
    seed: u64,
    streams: &mut RunStreams,
) -> Result<RunTrace> {
    check_run_inputs(env, truth, horizon)?;
    if truth.mode() != TruthMode::Single {
        return Err(Error::config("run_single requires a single-parameter truth"));
    }
    if spec.flat_len() != env.p {
        return Err(Error::config("constraint shape does not match context dimension"));
    }

    let initial = cfg.oracle_init.then(|| truth.theta(0).clone());
    let mut agent = SingleAgent::new(spec.clone(), cfg.estimator, cfg.t_min, initial);
    let mut trace = TraceBuilder::new(seed, cfg.record_batches, horizon);
    let theta_star = truth.theta(0);

    for t in 1..=horizon {
        if let Some(update) = agent.maybe_reestimate(t)? {
            trace.boundaries.push(BoundaryRecord {
                t,
                arm: 0,
                episode: update.episode,
                episode_len: update.episode_len,
                est_error: (&agent.estimate - theta_star).norm(),
                puffer_rank: update.puffer_rank,
                iterations: update.iterations,
            });
        }

        let estimates_view = std::slice::from_ref(&agent.estimate);
        let history = HistoryView {
            batches: &trace.batches,
            chosen: &trace.chosen,
            rewards: &trace.rewards,
            estimates: full_info(env).then_some(estimates_view),
        };
        let batch = env.generate_contexts(t, &history, &mut streams.contexts, &mut streams.perturbations)?;

        let chosen = agent.select(t, &batch, &mut streams.agent)?;
        let y = reward(truth, chosen, &batch.contexts[chosen], noise, &mut streams.noise)?;
        let (optimal, best_value) = argmax_truth(truth, &batch);
        let inst = best_value - batch.contexts[chosen].dot(truth.theta(chosen));
        let est_error = (&agent.estimate - theta_star).norm();

        agent.observe(batch.contexts[chosen].clone(), y);
        trace.push_round(t, episode_index_single(t), chosen, optimal, y, inst, est_error, batch);
    }
    Ok(trace.finish())
}

/// Run the multi-parameter greedy algorithm: round-robin warm start, then
/// greedy play with independently doubling per-arm episodes.
pub fn run_multi(
    env: &Environment,
    truth: &GroundTruth,
    specs: &[NormSpec],
    cfg: &MultiRunConfig,
    horizon: usize,
    noise: &NoiseModel,
    seed: u64,
    streams: &mut RunStreams,
) -> Result<RunTrace> {
    check_run_inputs(env, truth, horizon)?;
    if truth.mode() != TruthMode::Multi {
        return Err(Error::config("run_multi requires a multi-parameter truth"));
    }
    let k = env.k;
    if specs.len() != k {
        return Err(Error::config(format!("expected {k} constraint specs, got {}", specs.len())));
    }
    if cfg.warm_start == 0 || cfg.warm_start % k != 0 {
        return Err(Error::config(format!(
            "warm start {} must be a positive multiple of k = {k}",
            cfg.warm_start
        )));
    }
    if horizon <= cfg.warm_start {
        return Err(Error::config(format!(
            "horizon {horizon} must exceed the warm start {}",
            cfg.warm_start
        )));
    }

    let mut agent = MultiAgent::new(specs.to_vec(), cfg.estimator, cfg.warm_start);
    let mut trace = TraceBuilder::new(seed, cfg.record_batches, horizon);
    // (chosen_rounds, optimal_missed) per arm and episode.
    let mut stats: Vec<Vec<(usize, usize)>> = vec![vec![(0, 0)]; k];

    for t in 1..=horizon {
        let history = HistoryView {
            batches: &trace.batches,
            chosen: &trace.chosen,
            rewards: &trace.rewards,
            estimates: full_info(env).then_some(agent.estimates.as_slice()),
        };
        let batch = env.generate_contexts(t, &history, &mut streams.contexts, &mut streams.perturbations)?;

        let chosen = agent.select(t, &batch, &mut streams.agent)?;
        let y = reward(truth, chosen, &batch.contexts[chosen], noise, &mut streams.noise)?;
        let (optimal, best_value) = argmax_truth(truth, &batch);
        let inst = best_value - batch.contexts[chosen].dot(truth.theta(chosen));
        let est_error = (&agent.estimates[chosen] - truth.theta(chosen)).norm();
        let episode_label = agent.episodes[chosen];

        stats[chosen][episode_label].0 += 1;
        if chosen != optimal {
            let opt_episode = agent.episodes[optimal];
            stats[optimal][opt_episode].1 += 1;
        }

        for (arm, update) in agent.observe(t, chosen, batch.contexts[chosen].clone(), y)? {
            trace.boundaries.push(BoundaryRecord {
                t: t + 1,
                arm,
                episode: update.episode,
                episode_len: update.episode_len,
                est_error: (&agent.estimates[arm] - truth.theta(arm)).norm(),
                puffer_rank: update.puffer_rank,
                iterations: update.iterations,
            });
            stats[arm].push((0, 0));
        }

        trace.push_round(t, episode_label, chosen, optimal, y, inst, est_error, batch);
    }

    for (arm, per_episode) in stats.into_iter().enumerate() {
        for (episode, (chosen_rounds, optimal_missed)) in per_episode.into_iter().enumerate() {
            trace.arm_episodes.push(ArmEpisodeStats { arm, episode, chosen_rounds, optimal_missed });
        }
    }
    Ok(trace.finish())
}

fn full_info(env: &Environment) -> bool {
    env.info == crate::env::AdversaryInfo::Full
}

/// Run a baseline policy under the same trace contract as the greedy runs.
///
/// `UnstructuredGreedy` delegates to the single-parameter algorithm with an
/// l2 ball of radius 10 * ||theta*||_2, which leaves the constraint
/// effectively inactive.
pub fn run_baseline(
    kind: BaselineKind,
    env: &Environment,
    truth: &GroundTruth,
    cfg: &SingleRunConfig,
    horizon: usize,
    noise: &NoiseModel,
    seed: u64,
    streams: &mut RunStreams,
) -> Result<RunTrace> {
    check_run_inputs(env, truth, horizon)?;
    match kind {
        BaselineKind::UnstructuredGreedy => {
            if truth.mode() != TruthMode::Single {
                return Err(Error::config("unstructured baseline requires a single-parameter truth"));
            }
            let radius = 10.0 * truth.theta(0).norm();
            let spec = NormSpec::l2(env.p, radius)?;
            run_single(env, truth, &spec, cfg, horizon, noise, seed, streams)
        }
        BaselineKind::RandomPolicy | BaselineKind::OracleGreedy => {
            let mut trace = TraceBuilder::new(seed, cfg.record_batches, horizon);
            let multi = truth.mode() == TruthMode::Multi;
            let mut stats: Vec<(usize, usize)> = vec![(0, 0); env.k];
            let oracle_estimates: Vec<DVector<f64>> = match truth.mode() {
                TruthMode::Single => vec![truth.theta(0).clone()],
                TruthMode::Multi => truth.thetas().to_vec(),
            };
            for t in 1..=horizon {
                let history = HistoryView {
                    batches: &trace.batches,
                    chosen: &trace.chosen,
                    rewards: &trace.rewards,
                    estimates: None,
                };
                let batch =
                    env.generate_contexts(t, &history, &mut streams.contexts, &mut streams.perturbations)?;
                let chosen = match kind {
                    BaselineKind::RandomPolicy => streams.agent.gen_range(0..env.k),
                    BaselineKind::OracleGreedy => select_arm(&oracle_estimates, &batch)?,
                    BaselineKind::UnstructuredGreedy => unreachable!(),
                };
                let y = reward(truth, chosen, &batch.contexts[chosen], noise, &mut streams.noise)?;
                let (optimal, best_value) = argmax_truth(truth, &batch);
                let inst = best_value - batch.contexts[chosen].dot(truth.theta(chosen));
                let est_error = match kind {
                    BaselineKind::OracleGreedy => 0.0,
                    _ => truth.theta(chosen).norm(),
                };
                if multi {
                    stats[chosen].0 += 1;
                    if chosen != optimal {
                        stats[optimal].1 += 1;
                    }
                }
                trace.push_round(t, 0, chosen, optimal, y, inst, est_error, batch);
            }
            if multi {
                for (arm, (chosen_rounds, optimal_missed)) in stats.into_iter().enumerate() {
                    trace.arm_episodes.push(ArmEpisodeStats {
                        arm,
                        episode: 0,
                        chosen_rounds,
                        optimal_missed,
                    });
                }
            }
            Ok(trace.finish())
        }
    }
}
