//! Experiment orchestration: seeded replications, metrics, aggregation and CSV output.
//!
//! Every random quantity in a replication comes from its own ChaCha stream
//! derived from the master seed and the replication index, so two algorithms
//! run with the same config see identical instances, contexts and noise.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::environments::{
    env_step, ihdp_step, load_ihdp, policy_rewards, BanditInstance, ContextDistribution, EnvOutcome, IhdpDataset,
    IhdpRecord, McEstimate, DEFAULT_SIGMA,
};
use crate::error::{Error, Result};
use crate::estimation::ConfidenceSet;
use crate::policies::{feasible_arms, Algorithm, Learner, LearnerConfig, OptimizerConfig, PolicySnapshot, PolicyState};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_IHDP_SIGMA: f64 = 1.0;
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Contexts used to pick the synthetic baseline arm.
const BASELINE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Synthetic,
    Ihdp { path: PathBuf },
}

/// A loaded environment, shared read-only by all replications.
#[derive(Debug, Clone)]
pub enum Environment {
    Synthetic,
    Ihdp(IhdpDataset),
}

impl Environment {
    pub fn load(spec: &EnvironmentSpec) -> Result<Self> {
        match spec {
            EnvironmentSpec::Synthetic => Ok(Environment::Synthetic),
            EnvironmentSpec::Ihdp { path } => Ok(Environment::Ihdp(load_ihdp(path)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub arms: usize,
    pub dim: usize,
    pub rounds: usize,
    pub replications: usize,
    pub lambda: f64,
    pub delta: f64,
    pub sigma: f64,
    /// Bound `L` on each arm parameter's norm.
    pub param_bound: f64,
    /// Factor on the data-dependent part of the confidence radius; 1 uses the
    /// radius as is, `sigma` gives the noise-scaled radius.
    pub radius_noise_scale: f64,
    pub optimizer: OptimizerConfig,
    pub clucb_alpha: f64,
    pub rs_linucb_c: f64,
    pub environment: EnvironmentSpec,
    pub seed: u64,
    /// Contexts per Monte Carlo evaluation of a policy change.
    pub mc_samples: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::RsConservative,
            arms: 4,
            dim: 5,
            rounds: 10_000,
            replications: 50,
            lambda: DEFAULT_LAMBDA,
            delta: DEFAULT_DELTA,
            sigma: DEFAULT_SIGMA,
            param_bound: 1.0,
            radius_noise_scale: 1.0,
            optimizer: OptimizerConfig::default(),
            clucb_alpha: 0.1,
            rs_linucb_c: 1.0,
            environment: EnvironmentSpec::Synthetic,
            seed: 0,
            mc_samples: DEFAULT_MC_SAMPLES,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Two-arm IHDP task: 26-dimensional contexts, one pass over the 747 subjects,
    /// one replication per realization.
    pub fn ihdp(path: impl Into<PathBuf>) -> Self {
        Self {
            arms: 2,
            dim: crate::environments::IHDP_COVARIATES + 1,
            rounds: crate::environments::IHDP_SUBJECTS,
            replications: crate::environments::IHDP_REALIZATIONS,
            sigma: DEFAULT_IHDP_SIGMA,
            environment: EnvironmentSpec::Ihdp { path: path.into() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds < 1 {
            return fail("rounds must be at least 1");
        }
        if self.replications < 1 {
            return fail("replications must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta must lie in (0,1)");
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return fail("lambda must be positive");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return fail("sigma must be nonnegative");
        }
        if !(self.param_bound.is_finite() && self.param_bound > 0.0) {
            return fail("parameter bound must be positive");
        }
        if !(self.radius_noise_scale.is_finite() && self.radius_noise_scale > 0.0) {
            return fail("radius noise scale must be positive");
        }
        if self.arms < 1 || self.dim < 1 {
            return fail("arms and dim must be positive");
        }
        if self.arms < 2 && matches!(self.algorithm, Algorithm::RsConservative | Algorithm::RsGreedy) {
            return fail("rarely-switching boundary updates need at least two arms");
        }
        if !(self.clucb_alpha > 0.0 && self.clucb_alpha <= 1.0) {
            return fail("clucb alpha must lie in (0,1]");
        }
        if !(self.rs_linucb_c.is_finite() && self.rs_linucb_c > 0.0) {
            return fail("rs_linucb C must be positive");
        }
        if self.mc_samples < 1 {
            return fail("mc_samples must be positive");
        }
        self.optimizer.validate()?;
        if let EnvironmentSpec::Ihdp { .. } = self.environment {
            if self.arms != 2 {
                return fail("the IHDP task has exactly two arms");
            }
        }
        Ok(())
    }

    fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            optimizer: self.optimizer,
            clucb_alpha: self.clucb_alpha,
            rs_linucb_c: self.rs_linucb_c,
        }
    }
}

/// Expected rewards of the policy just before and just after one change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeRecord {
    pub round: usize,
    pub pre_expected: f64,
    pub post_expected: f64,
    /// Standard error of the paired difference (zero for exact evaluation).
    pub diff_stderr: f64,
    /// Post beats pre by more than one standard error of the difference.
    pub improved: bool,
}

/// Per-round log of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub algorithm: Algorithm,
    pub replication: usize,
    pub seed: u64,
    pub baseline_arm: usize,
    pub initial_theta: Vec<DVector<f64>>,
    pub instantaneous_regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub chosen_arm: Vec<usize>,
    pub policy_changed: Vec<bool>,
    pub cumulative_reward: Vec<f64>,
    pub baseline_cumulative_reward: Vec<f64>,
    pub changes: Vec<ChangeRecord>,
    pub change_count: usize,
    /// Whether the true parameters stayed in `C_t` at every round; `None` when
    /// the rewards are not generated by linear parameters.
    pub truth_always_inside: Option<bool>,
    /// Rounds where the played arm was outside the plausible arm set.
    pub infeasible_plays: usize,
    pub numerical_failures: usize,
    pub final_beta: f64,
    pub regret_bound: f64,
}

impl RunMetrics {
    pub fn rounds(&self) -> usize {
        self.instantaneous_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_per_step_regret(&self) -> f64 {
        match self.rounds() {
            0 => 0.0,
            t => self.final_regret() / t as f64,
        }
    }

    /// Fraction of rounds where the learner's cumulative reward trails the baseline's.
    pub fn below_baseline_fraction(&self) -> f64 {
        if self.rounds() == 0 {
            return 0.0;
        }
        let below = self
            .cumulative_reward
            .iter()
            .zip(&self.baseline_cumulative_reward)
            .filter(|(r, b)| r < b)
            .count();
        below as f64 / self.rounds() as f64
    }
}

/// Derived seed of replication `rep`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

#[derive(Clone, Copy)]
enum Stream {
    Instance = 1,
    Baseline,
    Contexts,
    Noise,
    Init,
    Policy,
    MonteCarlo,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[allow(clippy::large_enum_variant)]
enum Task<'a> {
    Synthetic {
        instance: BanditInstance,
        contexts: ChaCha8Rng,
        eval_contexts: Option<Vec<DVector<f64>>>,
    },
    Ihdp {
        records: &'a [IhdpRecord],
        contexts: Vec<DVector<f64>>,
    },
}

impl Task<'_> {
    fn next(&mut self, round: usize) -> (DVector<f64>, Vec<f64>) {
        match self {
            Task::Synthetic { instance, contexts, .. } => {
                let s = instance.context_dist.sample(instance.dim(), contexts);
                let means = instance.true_theta.iter().map(|t| s.dot(t)).collect();
                (s, means)
            }
            Task::Ihdp { records, contexts } => {
                let i = (round - 1) % records.len();
                (contexts[i].clone(), records[i].means().to_vec())
            }
        }
    }

    fn step(&self, context: &DVector<f64>, round: usize, arm: usize, noise: f64) -> Result<EnvOutcome> {
        match self {
            Task::Synthetic { instance, .. } => env_step(instance, context, arm, noise),
            Task::Ihdp { records, .. } => ihdp_step(&records[(round - 1) % records.len()], arm, noise),
        }
    }

    fn truth(&self) -> Option<&[DVector<f64>]> {
        match self {
            Task::Synthetic { instance, .. } => Some(&instance.true_theta),
            Task::Ihdp { .. } => None,
        }
    }

    /// Compares two snapshots on a shared evaluation sample.
    fn compare(&self, pre: &PolicySnapshot, post: &PolicySnapshot, round: usize) -> ChangeRecord {
        let (pre_r, post_r, exact) = match self {
            Task::Synthetic {
                instance,
                eval_contexts: Some(ctx),
                ..
            } => (
                policy_rewards(instance, ctx, |s| pre.act(s)),
                policy_rewards(instance, ctx, |s| post.act(s)),
                false,
            ),
            Task::Synthetic { .. } => (Vec::new(), Vec::new(), false),
            Task::Ihdp { records, contexts } => {
                let value = |snap: &PolicySnapshot| -> Vec<f64> {
                    records
                        .iter()
                        .zip(contexts)
                        .map(|(r, s)| r.means()[snap.act(s).min(1)])
                        .collect()
                };
                (value(pre), value(post), true)
            }
        };
        let diffs: Vec<f64> = post_r.iter().zip(&pre_r).map(|(a, b)| a - b).collect();
        let diff = McEstimate::from_samples(&diffs);
        let stderr = if exact { 0.0 } else { diff.stderr };
        ChangeRecord {
            round,
            pre_expected: McEstimate::from_samples(&pre_r).mean,
            post_expected: McEstimate::from_samples(&post_r).mean,
            diff_stderr: stderr,
            improved: diff.mean > stderr,
        }
    }
}

fn synthetic_instance(cfg: &ExperimentConfig, seed: u64) -> BanditInstance {
    let mut rng = stream(seed, Stream::Instance);
    let true_theta = (0..cfg.arms)
        .map(|_| ContextDistribution::UnitSphere.sample(cfg.dim, &mut rng))
        .collect();
    BanditInstance {
        true_theta,
        sigma: cfg.sigma,
        context_dist: ContextDistribution::UnitSphere,
        seed,
    }
}

/// Baseline arm for IHDP: the treatment with the larger average expected outcome.
fn ihdp_baseline(records: &[IhdpRecord]) -> usize {
    let (m0, m1) = records.iter().fold((0.0, 0.0), |(a, b), r| (a + r.mu0, b + r.mu1));
    usize::from(m1 > m0)
}

/// Runs one replication and returns its metrics and final confidence set.
pub fn run_replication(cfg: &ExperimentConfig, env: &Environment, rep: usize) -> Result<(RunMetrics, ConfidenceSet)> {
    let seed = replication_seed(cfg.seed, rep);
    let sparse = cfg.algorithm.has_sparse_changes();
    let (mut task, baseline_arm) = match env {
        Environment::Synthetic => {
            let instance = synthetic_instance(cfg, seed);
            let baseline = instance.baseline_arm(BASELINE_SAMPLES, stream(seed, Stream::Baseline).next_u64());
            let eval_contexts = sparse.then(|| {
                let mut rng = stream(seed, Stream::MonteCarlo);
                (0..cfg.mc_samples)
                    .map(|_| instance.context_dist.sample(cfg.dim, &mut rng))
                    .collect()
            });
            let task = Task::Synthetic {
                instance,
                contexts: stream(seed, Stream::Contexts),
                eval_contexts,
            };
            (task, baseline)
        }
        Environment::Ihdp(data) => {
            let ids: Vec<usize> = data.realization_ids().collect();
            let records = data
                .realization(ids[rep % ids.len()])
                .ok_or_else(|| Error::Config("IHDP realization missing".into()))?;
            if data.context_dim() != cfg.dim {
                return Err(Error::Config(format!(
                    "IHDP contexts have dimension {}, config says {}",
                    data.context_dim(),
                    cfg.dim
                )));
            }
            let contexts = records.iter().map(IhdpRecord::context).collect();
            (Task::Ihdp { records, contexts }, ihdp_baseline(records))
        }
    };

    let mut noise_rng = stream(seed, Stream::Noise);
    let mut policy_rng = stream(seed, Stream::Policy);
    let initial = PolicyState::random_init(cfg.algorithm, cfg.arms, cfg.dim, &mut stream(seed, Stream::Init));
    let initial_theta = initial.theta_tilde().to_vec();

    let mut set = ConfidenceSet::new(cfg.arms, cfg.dim, cfg.lambda, cfg.delta, cfg.param_bound)?
        .with_noise_scale(cfg.radius_noise_scale)?;
    let mut learner = Learner::new(cfg.algorithm, cfg.learner_config(), &set, initial_theta.clone(), baseline_arm)?;
    let mut snapshot = if sparse { learner.snapshot() } else { None };

    let t_max = cfg.rounds;
    let mut m = RunMetrics {
        algorithm: cfg.algorithm,
        replication: rep,
        seed,
        baseline_arm,
        initial_theta,
        instantaneous_regret: Vec::with_capacity(t_max),
        cumulative_regret: Vec::with_capacity(t_max),
        chosen_arm: Vec::with_capacity(t_max),
        policy_changed: Vec::with_capacity(t_max),
        cumulative_reward: Vec::with_capacity(t_max),
        baseline_cumulative_reward: Vec::with_capacity(t_max),
        changes: Vec::new(),
        change_count: 0,
        truth_always_inside: task.truth().map(|_| true),
        infeasible_plays: 0,
        numerical_failures: 0,
        final_beta: set.beta(),
        regret_bound: 0.0,
    };
    let (mut cum_regret, mut cum_reward, mut cum_baseline) = (0.0, 0.0, 0.0);

    for t in 1..=t_max {
        let (context, means) = task.next(t);
        let noise = cfg.sigma * noise_rng.sample::<f64, _>(StandardNormal);
        let baseline_mean = means[baseline_arm];

        let arm = learner.select(&set, &context, baseline_mean, &mut policy_rng);
        if !feasible_arms(&set, &context).contains(&arm) {
            m.infeasible_plays += 1;
        }
        let outcome = task.step(&context, t, arm, noise)?;
        learner.observe(arm, &context, baseline_mean);
        set.update(arm, &context, outcome.reward)?;
        if let (Some(inside), Some(truth)) = (m.truth_always_inside.as_mut(), task.truth()) {
            if *inside && !set.contains(truth)? {
                *inside = false;
            }
        }

        let changed = learner.update(&set, t)?;
        if changed && sparse {
            let post = learner.snapshot();
            if let (Some(pre), Some(post_snap)) = (snapshot.as_ref(), post.as_ref()) {
                m.changes.push(task.compare(pre, post_snap, t));
            }
            snapshot = post;
        }

        cum_regret += outcome.instantaneous_regret;
        cum_reward += outcome.reward;
        cum_baseline += baseline_mean + noise;
        m.instantaneous_regret.push(outcome.instantaneous_regret);
        m.cumulative_regret.push(cum_regret);
        m.chosen_arm.push(arm);
        m.policy_changed.push(changed);
        m.cumulative_reward.push(cum_reward);
        m.baseline_cumulative_reward.push(cum_baseline);
    }

    m.change_count = learner.change_count();
    m.numerical_failures = learner.numerical_failures();
    m.final_beta = set.beta();
    m.regret_bound = regret_bound_eval(cfg, &set, t_max);
    Ok((m, set))
}

/// Runs all replications in parallel; output order follows the replication index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    let env = Environment::load(&cfg.environment)?;
    run_experiment_in(cfg, &env)
}

/// As [`run_experiment`], with an already loaded environment.
pub fn run_experiment_in(cfg: &ExperimentConfig, env: &Environment) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, env, rep).map(|(m, _)| m))
        .collect()
}

/// Regret bound `sqrt(32·D·T·β_T·ln((D·λ + T·L²)/(D·λ)))` for `V_0 = λI`,
/// with `D` the joint dimension of `final_set`.
pub fn regret_bound_eval(cfg: &ExperimentConfig, final_set: &ConfidenceSet, rounds: usize) -> f64 {
    let d = final_set.joint_dim() as f64;
    let t = rounds as f64;
    let l2 = cfg.param_bound * cfg.param_bound;
    let lambda = final_set.lambda();
    let log_term = ((d * lambda + t * l2) / (d * lambda)).ln();
    (32.0 * d * t * final_set.beta() * log_term).sqrt()
}

/// Point estimate with a 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub value: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Interval {
    const Z95: f64 = 1.96;

    fn around(value: f64, stderr: f64) -> Self {
        Self {
            value,
            stderr,
            ci_low: value - Self::Z95 * stderr,
            ci_high: value + Self::Z95 * stderr,
        }
    }

    /// Mean across replications with `s/√R`; the error is zero for `R = 1`.
    pub fn of_mean(xs: &[f64]) -> Self {
        let (mean, se) = mean_stderr(xs);
        Self::around(mean, se)
    }

    /// Binomial proportion with the normal-approximation interval.
    pub fn of_proportion(successes: usize, n: usize) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let p = successes as f64 / n as f64;
        Some(Self::around(p, (p * (1.0 - p) / n as f64).sqrt()))
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-round mean and standard error of one metric across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub metric: &'static str,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Cross-replication summary of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub algorithm: Option<Algorithm>,
    pub replications: usize,
    pub rounds: usize,
    pub series: Vec<Series>,
    pub total_changes: Interval,
    pub below_baseline_fraction: Interval,
    /// Pooled over all evaluated changes; `None` when no change was evaluated.
    pub improving_change_fraction: Option<Interval>,
    pub evaluated_changes: usize,
    pub final_per_step_regret: Interval,
    pub final_cumulative_regret: Interval,
    /// `(replication, round, improved)` for every evaluated change.
    pub change_log: Vec<(usize, usize, bool)>,
}

impl AggregateSummary {
    pub fn series(&self, metric: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.metric == metric)
    }

    /// Scalar metrics as `(name, interval)` in output order.
    pub fn scalars(&self) -> Vec<(&'static str, Interval)> {
        let mut out = vec![
            ("total_changes", self.total_changes),
            ("below_baseline_fraction", self.below_baseline_fraction),
            ("final_per_step_regret", self.final_per_step_regret),
            ("final_cumulative_regret", self.final_cumulative_regret),
        ];
        if let Some(iv) = self.improving_change_fraction {
            out.push(("improving_change_fraction", iv));
        }
        out
    }
}

type Extractor = fn(&RunMetrics, usize) -> f64;

const SERIES: [(&str, Extractor); 7] = [
    ("instantaneous_regret", |m, t| m.instantaneous_regret[t]),
    ("cumulative_regret", |m, t| m.cumulative_regret[t]),
    ("per_step_regret", |m, t| m.cumulative_regret[t] / (t + 1) as f64),
    ("cumulative_reward", |m, t| m.cumulative_reward[t]),
    ("baseline_cumulative_reward", |m, t| m.baseline_cumulative_reward[t]),
    ("below_baseline", |m, t| {
        f64::from(u8::from(m.cumulative_reward[t] < m.baseline_cumulative_reward[t]))
    }),
    ("policy_changed", |m, t| f64::from(u8::from(m.policy_changed[t]))),
];

/// Summarizes replications of a single algorithm. Every run must have the
/// same algorithm and round count; an empty slice gives an empty summary.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateSummary> {
    let rounds = runs.first().map_or(0, RunMetrics::rounds);
    let algorithm = runs.first().map(|m| m.algorithm);
    for m in runs {
        if m.rounds() != rounds {
            return Err(Error::RejectedInput(format!(
                "replication {} has {} rounds, expected {rounds}",
                m.replication,
                m.rounds()
            )));
        }
        if Some(m.algorithm) != algorithm {
            return Err(Error::RejectedInput("runs from different algorithms".into()));
        }
    }

    let series = SERIES
        .iter()
        .map(|(name, f)| {
            let (mean, stderr) = (0..rounds)
                .map(|t| {
                    let xs: Vec<f64> = runs.iter().map(|m| f(m, t)).collect();
                    mean_stderr(&xs)
                })
                .unzip();
            Series {
                metric: name,
                mean,
                stderr,
            }
        })
        .collect();

    let scalar = |f: fn(&RunMetrics) -> f64| Interval::of_mean(&runs.iter().map(f).collect::<Vec<_>>());
    let change_log: Vec<(usize, usize, bool)> = runs
        .iter()
        .flat_map(|m| m.changes.iter().map(move |c| (m.replication, c.round, c.improved)))
        .collect();
    let improved = change_log.iter().filter(|c| c.2).count();

    Ok(AggregateSummary {
        algorithm,
        replications: runs.len(),
        rounds,
        series,
        total_changes: scalar(|m| m.change_count as f64),
        below_baseline_fraction: scalar(RunMetrics::below_baseline_fraction),
        improving_change_fraction: Interval::of_proportion(improved, change_log.len()),
        evaluated_changes: change_log.len(),
        final_per_step_regret: scalar(RunMetrics::final_per_step_regret),
        final_cumulative_regret: scalar(RunMetrics::final_regret),
        change_log,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `per_round.csv`, `changes.csv` and `summary.csv` into `dir`,
/// creating it if needed. Output is a pure function of the summaries.
pub fn emit_csv(summaries: &[AggregateSummary], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let per_round = dir.join("per_round.csv");
    let changes = dir.join("changes.csv");
    let summary = dir.join("summary.csv");
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source: csv::Error| Error::Csv {
            path: path.clone(),
            source,
        }
    };

    let mut w = csv_writer(&per_round)?;
    w.write_record(["algo", "round", "metric", "mean", "stderr"])
        .map_err(wrap(&per_round))?;
    for s in summaries {
        let algo = s.algorithm.map_or("", Algorithm::id);
        for series in &s.series {
            for (t, (mean, se)) in series.mean.iter().zip(&series.stderr).enumerate() {
                w.write_record([
                    algo,
                    &(t + 1).to_string(),
                    series.metric,
                    &mean.to_string(),
                    &se.to_string(),
                ])
                .map_err(wrap(&per_round))?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: per_round.clone(),
        source,
    })?;

    let mut w = csv_writer(&changes)?;
    w.write_record(["algo", "rep", "round", "improved"]).map_err(wrap(&changes))?;
    for s in summaries {
        let algo = s.algorithm.map_or("", Algorithm::id);
        for (rep, round, improved) in &s.change_log {
            w.write_record([algo, &rep.to_string(), &round.to_string(), if *improved { "1" } else { "0" }])
                .map_err(wrap(&changes))?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: changes.clone(),
        source,
    })?;

    let mut w = csv_writer(&summary)?;
    w.write_record(["algo", "metric", "value", "ci_low", "ci_high"])
        .map_err(wrap(&summary))?;
    for s in summaries.iter().filter(|s| s.replications > 0) {
        let algo = s.algorithm.map_or("", Algorithm::id);
        for (name, iv) in s.scalars() {
            w.write_record([
                algo,
                name,
                &iv.value.to_string(),
                &iv.ci_low.to_string(),
                &iv.ci_high.to_string(),
            ])
            .map_err(wrap(&summary))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: summary, source })?;
    Ok(())
}
