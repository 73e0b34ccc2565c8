//! Context generation, adversary strategies, and reward noise.
//!
//! Contexts arrive in batches of k per round: an adversary picks means
//! inside the unit ball (possibly adaptively from the visible history),
//! then nature adds fresh Gaussian perturbations drawn from a stream the
//! strategy never touches. The purely stochastic environment is the
//! zero-mean special case.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{norm_value, sample_sphere_direction, NormSpec};

/// Single shared parameter vs one parameter per context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    Single,
    Multi,
}

/// Ground-truth parameters, owned by the harness and never handed to agents
/// (agents only ever see the constraint radius through their `NormSpec`).
#[derive(Clone, Debug)]
pub struct GroundTruth {
    mode: TruthMode,
    thetas: Vec<DVector<f64>>,
    spec: NormSpec,
}

impl GroundTruth {
    pub fn new(mode: TruthMode, thetas: Vec<DVector<f64>>, spec: NormSpec) -> Result<Self> {
        match mode {
            TruthMode::Single if thetas.len() != 1 => {
                return Err(Error::Domain(format!(
                    "single mode requires exactly one parameter vector, got {}",
                    thetas.len()
                )))
            }
            TruthMode::Multi if thetas.is_empty() => {
                return Err(Error::Domain("multi mode requires at least one parameter".into()))
            }
            _ => {}
        }
        for theta in &thetas {
            let value = norm_value(&spec, theta)?;
            if (value - spec.radius()).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "parameter norm {value} does not match constraint radius {}",
                    spec.radius()
                )));
            }
        }
        Ok(GroundTruth { mode, thetas, spec })
    }

    pub fn mode(&self) -> TruthMode {
        self.mode
    }

    pub fn arms(&self) -> usize {
        self.thetas.len()
    }

    /// Parameter governing the reward of `arm`.
    pub fn theta(&self, arm: usize) -> &DVector<f64> {
        match self.mode {
            TruthMode::Single => &self.thetas[0],
            TruthMode::Multi => &self.thetas[arm],
        }
    }

    pub fn thetas(&self) -> &[DVector<f64>] {
        &self.thetas
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].len()
    }
}

/// Reward noise family; `uniform_bounded` is Uniform[-kappa*sqrt(3),
/// kappa*sqrt(3)], matching variance kappa^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    UniformBounded,
}

/// Zero-mean sub-Gaussian reward noise with scale `kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub kappa: f64,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::Domain(format!(
                "noise scale must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(NoiseModel { family, kappa })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => self.kappa * rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::UniformBounded => {
                let half_width = self.kappa * 3.0_f64.sqrt();
                if half_width == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-half_width..=half_width)
                }
            }
        }
    }
}

/// The k contexts of one round, with means and perturbations kept separable.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBatch {
    pub mus: Vec<DVector<f64>>,
    pub perturbations: Vec<DVector<f64>>,
    pub contexts: Vec<DVector<f64>>,
    pub sigma: f64,
}

impl ContextBatch {
    pub fn k(&self) -> usize {
        self.contexts.len()
    }
}

/// Adversary mean-selection strategy. Every output is radially clipped to
/// the unit ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// All means zero: the purely stochastic case.
    Zero,
    /// The same fixed vector for every arm.
    Constant { vector: Vec<f64> },
    /// One fresh random direction per round, shared by all arms.
    EqualMeans,
    /// Each arm's mean aligned with the agent's current estimate for it.
    AlignEstimate,
    /// Each arm's mean opposed to the agent's current estimate for it.
    AntiAlignEstimate,
}

/// What the adversary is allowed to observe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryInfo {
    /// Past contexts, choices, rewards, and the agent's current estimates.
    #[default]
    Full,
    /// Past contexts, choices, and rewards only.
    RewardsOnly,
}

/// Read-only view of the run history offered to the adversary.
#[derive(Clone, Copy)]
pub struct HistoryView<'a> {
    pub batches: &'a [ContextBatch],
    pub chosen: &'a [usize],
    pub rewards: &'a [f64],
    /// Current estimates: one vector (single) or k vectors (multi). `None`
    /// when the information set is rewards-only.
    pub estimates: Option<&'a [DVector<f64>]>,
}

impl<'a> HistoryView<'a> {
    pub fn empty() -> Self {
        HistoryView { batches: &[], chosen: &[], rewards: &[], estimates: None }
    }

    fn estimate_for_arm(&self, arm: usize) -> Option<&'a DVector<f64>> {
        self.estimates.map(|ests| if ests.len() == 1 { &ests[0] } else { &ests[arm] })
    }
}

fn clip_to_unit_ball(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 1.0 {
        v / n
    } else {
        v
    }
}

/// Produce the k mean vectors for one round, each clipped to the unit ball.
pub fn adversary_step<R: Rng + ?Sized>(
    strategy: &Strategy,
    history: &HistoryView<'_>,
    k: usize,
    p: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    match strategy {
        Strategy::Zero => vec![DVector::zeros(p); k],
        Strategy::Constant { vector } => {
            let v = clip_to_unit_ball(DVector::from_row_slice(vector));
            vec![v; k]
        }
        Strategy::EqualMeans => {
            let direction = sample_sphere_direction(p, rng);
            vec![clip_to_unit_ball(direction); k]
        }
        Strategy::AlignEstimate | Strategy::AntiAlignEstimate => {
            let sign = if matches!(strategy, Strategy::AlignEstimate) { 1.0 } else { -1.0 };
            (0..k)
                .map(|arm| {
                    let mu = match history.estimate_for_arm(arm) {
                        Some(est) if est.norm() > 1e-12 => est * (sign / est.norm()),
                        _ => DVector::zeros(p),
                    };
                    clip_to_unit_ball(mu)
                })
                .collect()
        }
    }
}

/// Context process: purely stochastic Gaussian draws, or adversary means
/// plus Gaussian smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gaussian,
    Smoothed,
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub kind: EnvKind,
    pub strategy: Strategy,
    pub k: usize,
    pub p: usize,
    pub sigma: f64,
    /// What the strategy may read from the history.
    pub info: AdversaryInfo,
}

impl Environment {
    pub fn gaussian(k: usize, p: usize, sigma: f64) -> Result<Self> {
        Self::new(EnvKind::Gaussian, Strategy::Zero, k, p, sigma)
    }

    pub fn smoothed(strategy: Strategy, k: usize, p: usize, sigma: f64) -> Result<Self> {
        Self::new(EnvKind::Smoothed, strategy, k, p, sigma)
    }

    pub fn new(kind: EnvKind, strategy: Strategy, k: usize, p: usize, sigma: f64) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::config("environment requires k >= 1 and p >= 1"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::config(format!("sigma must be finite and nonnegative, got {sigma}")));
        }
        if let Strategy::Constant { vector } = &strategy {
            if vector.len() != p {
                return Err(Error::config(format!(
                    "constant strategy vector has length {}, expected {p}",
                    vector.len()
                )));
            }
        }
        Ok(Environment { kind, strategy, k, p, sigma, info: AdversaryInfo::Full })
    }

    pub fn with_info(mut self, info: AdversaryInfo) -> Self {
        self.info = info;
        self
    }

    /// Generate one round of contexts. The strategy draws only from
    /// `strategy_rng`; perturbations draw only from `perturb_rng`, after the
    /// means are fixed.
    pub fn generate_contexts<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &self,
        t: usize,
        history: &HistoryView<'_>,
        strategy_rng: &mut R1,
        perturb_rng: &mut R2,
    ) -> Result<ContextBatch> {
        if t < 1 {
            return Err(Error::precondition("round index starts at 1"));
        }
        let mus = match self.kind {
            EnvKind::Gaussian => vec![DVector::zeros(self.p); self.k],
            EnvKind::Smoothed => {
                adversary_step(&self.strategy, history, self.k, self.p, strategy_rng)
            }
        };
        let perturbations: Vec<DVector<f64>> = (0..self.k)
            .map(|_| {
                DVector::from_fn(self.p, |_, _| self.sigma * perturb_rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let contexts = mus
            .iter()
            .zip(&perturbations)
            .map(|(mu, g)| mu + g)
            .collect();
        Ok(ContextBatch { mus, perturbations, contexts, sigma: self.sigma })
    }
}

/// Noisy linear reward for pulling `arm` on `context`.
pub fn reward<R: Rng + ?Sized>(
    truth: &GroundTruth,
    arm: usize,
    context: &DVector<f64>,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    if truth.mode() == TruthMode::Multi && arm >= truth.arms() {
        return Err(Error::ArmOutOfRange { arm, k: truth.arms() });
    }
    let theta = truth.theta(arm);
    if theta.len() != context.len() {
        return Err(Error::Dimension {
            context: "reward context vs parameter",
            expected: theta.len(),
            actual: context.len(),
        });
    }
    Ok(context.dot(theta) + noise.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn noiseless() -> NoiseModel {
        NoiseModel::new(NoiseFamily::Gaussian, 0.0).unwrap()
    }

    fn single_truth(theta: &[f64]) -> GroundTruth {
        let v = DVector::from_row_slice(theta);
        let spec = NormSpec::l2(theta.len(), v.norm()).unwrap();
        GroundTruth::new(TruthMode::Single, vec![v], spec).unwrap()
    }

    #[test]
    fn gaussian_env_sigma_zero_gives_zero_contexts() {
        let env = Environment::gaussian(3, 4, 0.0).unwrap();
        let mut s = ChaCha20Rng::seed_from_u64(1);
        let mut p = ChaCha20Rng::seed_from_u64(2);
        let batch = env.generate_contexts(1, &HistoryView::empty(), &mut s, &mut p).unwrap();
        for x in &batch.contexts {
            assert_eq!(*x, DVector::zeros(4));
        }
    }

    #[test]
    fn constant_strategy_sets_all_means() {
        let env = Environment::smoothed(
            Strategy::Constant { vector: vec![1.0, 0.0] },
            3,
            2,
            0.5,
        )
        .unwrap();
        let mut s = ChaCha20Rng::seed_from_u64(1);
        let mut p = ChaCha20Rng::seed_from_u64(2);
        let batch = env.generate_contexts(1, &HistoryView::empty(), &mut s, &mut p).unwrap();
        for (mu, (x, g)) in batch.mus.iter().zip(batch.contexts.iter().zip(&batch.perturbations)) {
            assert_eq!(*mu, DVector::from_row_slice(&[1.0, 0.0]));
            assert_relative_eq!((x - (mu + g)).norm(), 0.0);
        }
    }

    #[test]
    fn constant_strategy_clips_to_unit_ball() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mus = adversary_step(
            &Strategy::Constant { vector: vec![0.0, 3.0] },
            &HistoryView::empty(),
            2,
            2,
            &mut rng,
        );
        for mu in mus {
            assert_relative_eq!(mu[1], 1.0, epsilon = 1e-12);
            assert_relative_eq!(mu.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_and_equal_means_strategies() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let zeros = adversary_step(&Strategy::Zero, &HistoryView::empty(), 3, 5, &mut rng);
        assert!(zeros.iter().all(|mu| mu.norm() == 0.0));

        let equal = adversary_step(&Strategy::EqualMeans, &HistoryView::empty(), 4, 5, &mut rng);
        for mu in &equal[1..] {
            assert_eq!(*mu, equal[0]);
        }
        assert_relative_eq!(equal[0].norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn align_estimate_normalizes_and_falls_back() {
        let est = [DVector::from_row_slice(&[0.0, 3.0, 0.0])];
        let history = HistoryView { batches: &[], chosen: &[], rewards: &[], estimates: Some(&est) };
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mus = adversary_step(&Strategy::AlignEstimate, &history, 2, 3, &mut rng);
        for mu in &mus {
            assert_relative_eq!(mu[1], 1.0, epsilon = 1e-12);
        }
        let anti = adversary_step(&Strategy::AntiAlignEstimate, &history, 2, 3, &mut rng);
        assert_relative_eq!(anti[0][1], -1.0, epsilon = 1e-12);

        // Zero estimate falls back to the zero mean.
        let zero_est = [DVector::zeros(3)];
        let history = HistoryView { batches: &[], chosen: &[], rewards: &[], estimates: Some(&zero_est) };
        let mus = adversary_step(&Strategy::AlignEstimate, &history, 2, 3, &mut rng);
        assert!(mus.iter().all(|mu| mu.norm() == 0.0));

        // Rewards-only information hides the estimates entirely.
        let censored = HistoryView { batches: &[], chosen: &[], rewards: &[], estimates: None };
        let mus = adversary_step(&Strategy::AlignEstimate, &censored, 2, 3, &mut rng);
        assert!(mus.iter().all(|mu| mu.norm() == 0.0));
    }

    #[test]
    fn mean_clipping_holds_for_all_strategies() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let big = [DVector::from_row_slice(&[5.0, -7.0, 1.0])];
        let history = HistoryView { batches: &[], chosen: &[], rewards: &[], estimates: Some(&big) };
        let strategies = [
            Strategy::Zero,
            Strategy::Constant { vector: vec![4.0, 4.0, 4.0] },
            Strategy::EqualMeans,
            Strategy::AlignEstimate,
            Strategy::AntiAlignEstimate,
        ];
        for strategy in &strategies {
            for _ in 0..20 {
                for mu in adversary_step(strategy, &history, 3, 3, &mut rng) {
                    assert!(mu.norm() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn perturbations_identical_across_strategies_with_shared_seed() {
        let seed = 99;
        let run = |strategy: Strategy| -> Vec<ContextBatch> {
            let env = Environment::smoothed(strategy, 3, 4, 0.7).unwrap();
            let mut s = stream(seed, StreamRole::Contexts);
            let mut p = stream(seed, StreamRole::Perturbations);
            (1..=5)
                .map(|t| env.generate_contexts(t, &HistoryView::empty(), &mut s, &mut p).unwrap())
                .collect()
        };
        let a = run(Strategy::Zero);
        let b = run(Strategy::EqualMeans);
        for (ba, bb) in a.iter().zip(&b) {
            assert_eq!(ba.perturbations, bb.perturbations);
        }
    }

    #[test]
    fn reward_noiseless_dot_product() {
        let truth = single_truth(&[1.0, 0.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = DVector::from_row_slice(&[2.0, 5.0]);
        let r = reward(&truth, 0, &x, &noiseless(), &mut rng).unwrap();
        assert_relative_eq!(r, 2.0);
    }

    #[test]
    fn reward_orthogonal_parameter_is_pure_noise() {
        let nonzero = DVector::from_row_slice(&[1.0, 0.0]);
        let spec = NormSpec::l2(2, 1.0).unwrap();
        let truth = GroundTruth::new(
            TruthMode::Multi,
            vec![nonzero.clone(), -nonzero.clone()],
            spec,
        )
        .unwrap();
        // A context orthogonal to arm 2's parameter: the reward is exactly
        // the noise draw.
        let x = DVector::from_row_slice(&[0.0, 4.0]);
        let noise = NoiseModel::new(NoiseFamily::Gaussian, 1.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let r = reward(&truth, 1, &x, &noise, &mut rng).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(8);
        let expected = noise.sample(&mut rng2);
        assert_relative_eq!(r, expected);
    }

    #[test]
    fn reward_arm_out_of_range() {
        let spec = NormSpec::l2(2, 1.0).unwrap();
        let truth = GroundTruth::new(
            TruthMode::Multi,
            vec![DVector::from_row_slice(&[1.0, 0.0]), DVector::from_row_slice(&[0.0, 1.0])],
            spec,
        )
        .unwrap();
        let x = DVector::from_row_slice(&[1.0, 1.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        assert!(matches!(
            reward(&truth, 2, &x, &noiseless(), &mut rng),
            Err(Error::ArmOutOfRange { arm: 2, k: 2 })
        ));
    }

    #[test]
    fn reward_sample_mean_matches_dot_product() {
        let truth = single_truth(&[1.0, 0.5]);
        let x = DVector::from_row_slice(&[1.0, 1.0]);
        let noise = NoiseModel::new(NoiseFamily::Gaussian, 1.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let n = 100_000;
        let mean: f64 =
            (0..n).map(|_| reward(&truth, 0, &x, &noise, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 3e-2 * noise.kappa);
    }

    #[test]
    fn noise_families_have_zero_empirical_mean() {
        for family in [NoiseFamily::Gaussian, NoiseFamily::UniformBounded] {
            let noise = NoiseModel::new(family, 0.8).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(11);
            let n = 1_000_000;
            let mean: f64 = (0..n).map(|_| noise.sample(&mut rng)).sum::<f64>() / n as f64;
            let sigma_mean = noise.kappa / (n as f64).sqrt();
            assert!(mean.abs() < 4.0 * sigma_mean, "family {family:?} mean {mean}");
        }
    }

    #[test]
    fn uniform_noise_variance_matches_kappa() {
        let noise = NoiseModel::new(NoiseFamily::UniformBounded, 0.5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let n = 200_000;
        let var: f64 = (0..n).map(|_| noise.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 0.25).abs() < 0.01);
    }

    #[test]
    fn negative_noise_scale_rejected() {
        assert!(NoiseModel::new(NoiseFamily::Gaussian, -0.1).is_err());
    }

    #[test]
    fn ground_truth_radius_invariant_enforced() {
        let spec = NormSpec::l2(2, 1.0).unwrap();
        let bad = GroundTruth::new(
            TruthMode::Single,
            vec![DVector::from_row_slice(&[2.0, 0.0])],
            spec,
        );
        assert!(bad.is_err());
    }
}
