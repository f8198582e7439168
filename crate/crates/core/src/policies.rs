//! Arm selection and policy-update rules.
//!
//! Linear policies play `argmax_a sᵀθ̃^a` and keep their operational
//! parameters `θ̃` fixed between updates. The update rules differ in when
//! they fire and where they move `θ̃`:
//!
//! | algorithm               | fires when                                   | moves to                   |
//! |-------------------------|----------------------------------------------|----------------------------|
//! | `rs_conservative`       | `θ̃ ∉ C_t` and boundary cosine `< 1 − Δ`     | cosine-optimal point of C_t|
//! | `rs_greedy`             | same                                         | `θ̂`                        |
//! | `feasible_conservative` | `θ̃ ∉ C_t`                                    | projection onto C_t        |
//! | `feasible_greedy`       | `θ̃ ∉ C_t`                                    | `θ̂`                        |
//! | `deterministic`         | `t` is a perfect square                      | `θ̂`                        |
//! | `greedy_ls`             | every round                                  | `θ̂`                        |
//!
//! `linucb`, `rs_linucb` and `clucb` act through upper confidence bounds
//! instead of a linear parameter set.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::estimation::{stack, unstack, ConfidenceSet};
use crate::geometry::{cosine_j, grad_cosine_j, DifferenceMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    LinUcb,
    RsLinUcb,
    GreedyLs,
    Clucb,
    FeasibleConservative,
    FeasibleGreedy,
    RsConservative,
    RsGreedy,
    Deterministic,
    /// Uniformly random arm every round (a randomized-trial reference).
    UniformRandom,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::LinUcb,
        Algorithm::RsLinUcb,
        Algorithm::GreedyLs,
        Algorithm::Clucb,
        Algorithm::FeasibleConservative,
        Algorithm::FeasibleGreedy,
        Algorithm::RsConservative,
        Algorithm::RsGreedy,
        Algorithm::Deterministic,
        Algorithm::UniformRandom,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::LinUcb => "linucb",
            Algorithm::RsLinUcb => "rs_linucb",
            Algorithm::GreedyLs => "greedy_ls",
            Algorithm::Clucb => "clucb",
            Algorithm::FeasibleConservative => "feasible_conservative",
            Algorithm::FeasibleGreedy => "feasible_greedy",
            Algorithm::RsConservative => "rs_conservative",
            Algorithm::RsGreedy => "rs_greedy",
            Algorithm::Deterministic => "deterministic",
            Algorithm::UniformRandom => "uniform_random",
        }
    }

    /// Algorithms that only ever play arms inside the plausible set.
    pub fn is_feasible(self) -> bool {
        matches!(
            self,
            Algorithm::LinUcb
                | Algorithm::GreedyLs
                | Algorithm::FeasibleConservative
                | Algorithm::FeasibleGreedy
                | Algorithm::RsConservative
                | Algorithm::RsGreedy
        )
    }

    /// Algorithms whose policy changes at most at a few rounds, so that each
    /// change can be evaluated individually.
    pub fn has_sparse_changes(self) -> bool {
        matches!(
            self,
            Algorithm::RsLinUcb
                | Algorithm::FeasibleConservative
                | Algorithm::FeasibleGreedy
                | Algorithm::RsConservative
                | Algorithm::RsGreedy
                | Algorithm::Deterministic
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Operational parameters `θ̃` of a linear policy and their change history.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    algorithm: Algorithm,
    theta_tilde: Vec<DVector<f64>>,
    change_count: usize,
    last_change_round: Option<usize>,
}

impl PolicyState {
    pub fn new(algorithm: Algorithm, theta_tilde: Vec<DVector<f64>>) -> Self {
        Self {
            algorithm,
            theta_tilde,
            change_count: 0,
            last_change_round: None,
        }
    }

    /// Random unit-norm initial parameters.
    pub fn random_init<R: Rng + ?Sized>(algorithm: Algorithm, arms: usize, dim: usize, rng: &mut R) -> Self {
        let params = (0..arms)
            .map(|_| {
                let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n > 0.0 {
                    g / n
                } else {
                    DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 })
                }
            })
            .collect();
        Self::new(algorithm, params)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn theta_tilde(&self) -> &[DVector<f64>] {
        &self.theta_tilde
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.theta_tilde)
    }

    pub fn change_count(&self) -> usize {
        self.change_count
    }

    pub fn last_change_round(&self) -> Option<usize> {
        self.last_change_round
    }

    /// Replaces `θ̃`; counts a change only if some component differs.
    pub fn commit(&mut self, params: Vec<DVector<f64>>, round: usize) -> bool {
        if params == self.theta_tilde {
            return false;
        }
        self.theta_tilde = params;
        self.change_count += 1;
        self.last_change_round = Some(round);
        true
    }
}

/// Projected-gradient settings for the boundary-cosine maximisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub n_iter: usize,
    /// Initial step; iteration `i` uses `epsilon / √i`.
    pub epsilon: f64,
    /// Angle tolerance `Δ`: changes with cosine `≥ 1 − Δ` are ignored.
    pub tolerance_delta: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_iter: 100,
            epsilon: 0.1,
            tolerance_delta: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.tolerance_delta > 0.0 && self.tolerance_delta < 1.0) {
            return Err(Error::Config("tolerance delta must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// `argmax_a sᵀθ^a` over a parameter list.
pub fn linear_argmax(params: &[DVector<f64>], context: &DVector<f64>) -> usize {
    argmax(params.iter().map(|p| context.dot(p)))
}

pub fn select_arm_linear(state: &PolicyState, context: &DVector<f64>) -> usize {
    linear_argmax(&state.theta_tilde, context)
}

/// Plausible payoff interval `sᵀθ̂^a ± β‖s‖_{(V^a)⁻¹}`.
pub fn payoff_interval(set: &ConfidenceSet, arm: usize, context: &DVector<f64>) -> (f64, f64) {
    let est = set.arm(arm);
    let mean = context.dot(est.theta_hat());
    let half = set.beta() * est.width(context);
    (mean - half, mean + half)
}

pub fn select_arm_ucb(set: &ConfidenceSet, context: &DVector<f64>) -> usize {
    argmax((0..set.arms()).map(|a| payoff_interval(set, a, context).1))
}

/// Arms whose upper bound reaches the largest lower bound.
pub fn feasible_arms(set: &ConfidenceSet, context: &DVector<f64>) -> Vec<usize> {
    let intervals: Vec<(f64, f64)> = (0..set.arms()).map(|a| payoff_interval(set, a, context)).collect();
    let best_lower = intervals.iter().map(|iv| iv.0).fold(f64::NEG_INFINITY, f64::max);
    (0..set.arms()).filter(|&a| intervals[a].1 >= best_lower).collect()
}

/// Projected gradient ascent of the boundary cosine `K(φ)` relative to
/// `anchor` over the confidence set, starting from the anchor itself.
/// Returns the final iterate and its cosine to the anchor.
pub fn maximize_boundary_cosine(
    anchor: &DVector<f64>,
    set: &ConfidenceSet,
    map: &DifferenceMap,
    cfg: &OptimizerConfig,
) -> Result<(DVector<f64>, f64)> {
    check_dim(set.joint_dim(), anchor.len())?;
    check_dim(map.input_dim(), anchor.len())?;
    let mut phi = anchor.clone();
    for i in 1..=cfg.n_iter {
        let step = cfg.epsilon / (i as f64).sqrt();
        let grad = grad_cosine_j(map, anchor, &phi)?;
        phi.axpy(step, &grad, 1.0);
        phi = set.project(&phi)?;
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at step {i}")));
        }
    }
    let cos = cosine_j(map, anchor, &phi)?;
    Ok((phi, cos))
}

enum TriggerTarget {
    Optimized,
    Estimate,
}

fn rarely_switching_update(
    state: &mut PolicyState,
    set: &ConfidenceSet,
    map: &DifferenceMap,
    cfg: &OptimizerConfig,
    round: usize,
    target: TriggerTarget,
) -> Result<bool> {
    // Second trigger first: it is cheap and the optimizer result is unused
    // when it fails.
    if set.distance_of(&state.theta_tilde)? <= set.beta() {
        return Ok(false);
    }
    let anchor = state.stacked();
    let (phi, cos) = maximize_boundary_cosine(&anchor, set, map, cfg)?;
    if cos >= 1.0 - cfg.tolerance_delta {
        return Ok(false);
    }
    let params = match target {
        TriggerTarget::Optimized => unstack(&phi, set.arms(), set.dim())?,
        TriggerTarget::Estimate => set.estimates().iter().map(|e| e.theta_hat().clone()).collect(),
    };
    Ok(state.commit(params, round))
}

/// Conservative rarely-switching update. Returns whether `θ̃` changed; on
/// error the state is untouched.
pub fn update_rs_conservative(
    state: &mut PolicyState,
    set: &ConfidenceSet,
    map: &DifferenceMap,
    cfg: &OptimizerConfig,
    round: usize,
) -> Result<bool> {
    rarely_switching_update(state, set, map, cfg, round, TriggerTarget::Optimized)
}

/// Greedy rarely-switching update: same triggers, jumps to `θ̂`.
pub fn update_rs_greedy(
    state: &mut PolicyState,
    set: &ConfidenceSet,
    map: &DifferenceMap,
    cfg: &OptimizerConfig,
    round: usize,
) -> Result<bool> {
    rarely_switching_update(state, set, map, cfg, round, TriggerTarget::Estimate)
}

pub fn update_feasible_conservative(state: &mut PolicyState, set: &ConfidenceSet, round: usize) -> Result<bool> {
    if set.contains(&state.theta_tilde)? {
        return Ok(false);
    }
    let projected = set.project(&state.stacked())?;
    let params = unstack(&projected, set.arms(), set.dim())?;
    Ok(state.commit(params, round))
}

pub fn update_feasible_greedy(state: &mut PolicyState, set: &ConfidenceSet, round: usize) -> Result<bool> {
    if set.contains(&state.theta_tilde)? {
        return Ok(false);
    }
    Ok(state.commit(theta_hats(set), round))
}

/// Whether the `√t` schedule fires at `round`, i.e. `⌊√t⌋ > ⌊√(t−1)⌋`.
pub fn deterministic_fires(round: usize) -> bool {
    let r = round.isqrt();
    round >= 1 && r * r == round
}

pub fn update_deterministic(state: &mut PolicyState, set: &ConfidenceSet, round: usize) -> Result<bool> {
    if round == 0 {
        return Err(Error::RejectedInput("rounds are numbered from 1".into()));
    }
    if !deterministic_fires(round) {
        return Ok(false);
    }
    Ok(state.commit(theta_hats(set), round))
}

fn theta_hats(set: &ConfidenceSet) -> Vec<DVector<f64>> {
    set.estimates().iter().map(|e| e.theta_hat().clone()).collect()
}

/// Running totals for the conservative-UCB reward budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ClucbBudget {
    /// Per arm, the sum of contexts on rounds where that (non-baseline) arm was played.
    played_contexts: Vec<DVector<f64>>,
    /// Baseline reward summed over rounds where the baseline arm was played.
    baseline_on_baseline_rounds: f64,
    /// Baseline reward summed over all rounds so far.
    baseline_total: f64,
}

impl ClucbBudget {
    pub fn new(arms: usize, dim: usize) -> Self {
        Self {
            played_contexts: vec![DVector::zeros(dim); arms],
            baseline_on_baseline_rounds: 0.0,
            baseline_total: 0.0,
        }
    }

    /// Records the action taken on a round whose baseline expected reward was `baseline_reward`.
    pub fn record(&mut self, arm: usize, baseline_arm: usize, context: &DVector<f64>, baseline_reward: f64) {
        self.baseline_total += baseline_reward;
        if arm == baseline_arm {
            self.baseline_on_baseline_rounds += baseline_reward;
        } else {
            self.played_contexts[arm] += context;
        }
    }

    pub fn baseline_total(&self) -> f64 {
        self.baseline_total
    }

    /// Lower confidence bound on the cumulative reward of all non-baseline
    /// plays, with `extra` added as a hypothetical play of `extra.0`.
    pub fn pessimistic_reward(&self, set: &ConfidenceSet, extra: Option<(usize, &DVector<f64>)>) -> f64 {
        let mut mean = 0.0;
        let mut var = 0.0;
        for (a, sum) in self.played_contexts.iter().enumerate() {
            let x = match extra {
                Some((arm, s)) if arm == a => sum + s,
                _ => sum.clone(),
            };
            let est = set.arm(a);
            mean += x.dot(est.theta_hat());
            let w = est.width(&x);
            var += w * w;
        }
        mean - set.beta() * var.sqrt() + self.baseline_on_baseline_rounds
    }
}

/// Conservative UCB: play the optimistic arm only if the pessimistic
/// cumulative reward after doing so stays above `(1 − α)` times the
/// baseline's cumulative reward; otherwise play the baseline arm.
pub fn select_clucb(
    set: &ConfidenceSet,
    context: &DVector<f64>,
    baseline_arm: usize,
    baseline_reward: f64,
    alpha: f64,
    budget: &ClucbBudget,
) -> usize {
    let optimistic = select_arm_ucb(set, context);
    if optimistic == baseline_arm {
        return baseline_arm;
    }
    let pessimistic = budget.pessimistic_reward(set, Some((optimistic, context)));
    if pessimistic >= (1.0 - alpha) * (budget.baseline_total + baseline_reward) {
        optimistic
    } else {
        baseline_arm
    }
}

/// A UCB rule evaluated with estimates frozen at some earlier round.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenUcb {
    theta_hat: Vec<DVector<f64>>,
    gram_inv: Vec<DMatrix<f64>>,
    beta: f64,
}

impl FrozenUcb {
    pub fn capture(set: &ConfidenceSet) -> Self {
        Self {
            theta_hat: theta_hats(set),
            gram_inv: set.estimates().iter().map(|e| e.gram_inv().clone()).collect(),
            beta: set.beta(),
        }
    }

    pub fn select(&self, context: &DVector<f64>) -> usize {
        argmax(self.theta_hat.iter().zip(&self.gram_inv).map(|(th, inv)| {
            let width = context.dot(&(inv * context)).max(0.0).sqrt();
            context.dot(th) + self.beta * width
        }))
    }
}

/// Frozen view of a policy, used to evaluate expected reward before and after a change.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySnapshot {
    Linear(Vec<DVector<f64>>),
    Ucb(FrozenUcb),
}

impl PolicySnapshot {
    pub fn act(&self, context: &DVector<f64>) -> usize {
        match self {
            PolicySnapshot::Linear(params) => linear_argmax(params, context),
            PolicySnapshot::Ucb(frozen) => frozen.select(context),
        }
    }
}

/// Per-algorithm knobs for [`Learner`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub optimizer: OptimizerConfig,
    pub clucb_alpha: f64,
    /// RS-LinUCB recomputes once `det V` has grown by a factor `1 + C`.
    pub rs_linucb_c: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            clucb_alpha: 0.1,
            rs_linucb_c: 1.0,
        }
    }
}

/// One decision-maker of any [`Algorithm`], driven round by round.
#[derive(Debug, Clone)]
pub struct Learner {
    algorithm: Algorithm,
    cfg: LearnerConfig,
    state: PolicyState,
    map: Option<DifferenceMap>,
    frozen: Option<(FrozenUcb, f64)>,
    budget: Option<ClucbBudget>,
    baseline_arm: usize,
    changes: usize,
    numerical_failures: usize,
}

impl Learner {
    /// `initial` supplies `θ̃_0` for the linear policies; `baseline_arm` is
    /// used by CLUCB.
    pub fn new(
        algorithm: Algorithm,
        cfg: LearnerConfig,
        set: &ConfidenceSet,
        initial: Vec<DVector<f64>>,
        baseline_arm: usize,
    ) -> Result<Self> {
        check_dim(set.arms(), initial.len())?;
        let map = match algorithm {
            Algorithm::RsConservative | Algorithm::RsGreedy => Some(DifferenceMap::new(set.arms(), set.dim())?),
            _ => None,
        };
        if algorithm == Algorithm::Clucb && !(cfg.clucb_alpha > 0.0 && cfg.clucb_alpha <= 1.0) {
            return Err(Error::Config("clucb alpha must lie in (0,1]".into()));
        }
        if !(cfg.rs_linucb_c.is_finite() && cfg.rs_linucb_c > 0.0) {
            return Err(Error::Config("rs_linucb C must be positive".into()));
        }
        cfg.optimizer.validate()?;
        Ok(Self {
            algorithm,
            cfg,
            state: PolicyState::new(algorithm, initial),
            map,
            frozen: (algorithm == Algorithm::RsLinUcb).then(|| (FrozenUcb::capture(set), set.joint_ln_det())),
            budget: (algorithm == Algorithm::Clucb).then(|| ClucbBudget::new(set.arms(), set.dim())),
            baseline_arm,
            changes: 0,
            numerical_failures: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn change_count(&self) -> usize {
        self.changes
    }

    pub fn numerical_failures(&self) -> usize {
        self.numerical_failures
    }

    /// Chooses an arm for `context` using the estimates from before this round.
    pub fn select<R: Rng + ?Sized>(
        &self,
        set: &ConfidenceSet,
        context: &DVector<f64>,
        baseline_reward: f64,
        rng: &mut R,
    ) -> usize {
        match self.algorithm {
            Algorithm::LinUcb => select_arm_ucb(set, context),
            Algorithm::RsLinUcb => self
                .frozen
                .as_ref()
                .map_or_else(|| select_arm_ucb(set, context), |(f, _)| f.select(context)),
            Algorithm::Clucb => match &self.budget {
                Some(budget) => select_clucb(
                    set,
                    context,
                    self.baseline_arm,
                    baseline_reward,
                    self.cfg.clucb_alpha,
                    budget,
                ),
                None => select_arm_ucb(set, context),
            },
            Algorithm::UniformRandom => rng.gen_range(0..set.arms()),
            _ => select_arm_linear(&self.state, context),
        }
    }

    /// Bookkeeping for the action taken this round (before estimates change).
    pub fn observe(&mut self, arm: usize, context: &DVector<f64>, baseline_reward: f64) {
        if let Some(budget) = &mut self.budget {
            budget.record(arm, self.baseline_arm, context, baseline_reward);
        }
    }

    /// Runs the update rule after the estimates absorbed round `round`.
    /// Returns whether the policy changed. Numerical failures in the
    /// optimizer leave the policy as it was and are counted.
    pub fn update(&mut self, set: &ConfidenceSet, round: usize) -> Result<bool> {
        let changed = match self.algorithm {
            // The UCB rule is a function of the estimates, which move every round.
            Algorithm::LinUcb | Algorithm::Clucb => true,
            Algorithm::UniformRandom => false,
            Algorithm::RsLinUcb => {
                let ln_det_at_freeze = self.frozen.as_ref().map_or(f64::NEG_INFINITY, |(_, l)| *l);
                // Small slack so an exact (1 + C)-fold growth fires despite rounding in ln det.
                if set.joint_ln_det() >= ln_det_at_freeze + self.cfg.rs_linucb_c.ln_1p() - 1e-12 {
                    self.frozen = Some((FrozenUcb::capture(set), set.joint_ln_det()));
                    true
                } else {
                    false
                }
            }
            Algorithm::GreedyLs => self.state.commit(theta_hats(set), round),
            Algorithm::Deterministic => update_deterministic(&mut self.state, set, round)?,
            Algorithm::FeasibleConservative => update_feasible_conservative(&mut self.state, set, round)?,
            Algorithm::FeasibleGreedy => update_feasible_greedy(&mut self.state, set, round)?,
            Algorithm::RsConservative | Algorithm::RsGreedy => {
                let map = self.map.as_ref().ok_or_else(|| Error::Numerical("missing difference map".into()))?;
                let result = if self.algorithm == Algorithm::RsConservative {
                    update_rs_conservative(&mut self.state, set, map, &self.cfg.optimizer, round)
                } else {
                    update_rs_greedy(&mut self.state, set, map, &self.cfg.optimizer, round)
                };
                match result {
                    Ok(changed) => changed,
                    Err(Error::Numerical(_)) | Err(Error::DegenerateDirection(_)) => {
                        self.numerical_failures += 1;
                        false
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if changed {
            self.changes += 1;
        }
        Ok(changed)
    }

    /// The current policy as a standalone decision rule, for algorithms with
    /// sparse changes.
    pub fn snapshot(&self) -> Option<PolicySnapshot> {
        match self.algorithm {
            Algorithm::RsLinUcb => self.frozen.as_ref().map(|(f, _)| PolicySnapshot::Ucb(f.clone())),
            a if a.has_sparse_changes() => Some(PolicySnapshot::Linear(self.state.theta_tilde.clone())),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn linear(params: &[&[f64]]) -> PolicyState {
        PolicyState::new(Algorithm::RsConservative, params.iter().map(|p| v(p)).collect())
    }

    fn random_set(arms: usize, dim: usize, pulls: usize, seed: u64) -> ConfidenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ConfidenceSet::new(arms, dim, 0.1, 0.1, 1.0).unwrap();
        for _ in 0..pulls {
            let s = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let a = rng.gen_range(0..arms);
            let y = s.sum() * (a as f64 - 1.0) + rng.gen_range(-0.1..0.1);
            set.update(a, &s, y).unwrap();
        }
        set
    }

    #[test]
    fn algorithm_ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
        assert!("thompson".parse::<Algorithm>().is_err());
    }

    #[test]
    fn linear_selection() {
        let s = linear(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(select_arm_linear(&s, &v(&[1.0, 0.0])), 0);
        assert_eq!(select_arm_linear(&s, &v(&[0.0, 1.0])), 1);
        let tied = linear(&[&[0.3, 0.3], &[0.3, 0.3], &[0.3, 0.3]]);
        assert_eq!(select_arm_linear(&tied, &v(&[0.5, -0.2])), 0);
    }

    #[test]
    fn ucb_prefers_less_explored_arm() {
        let mut set = ConfidenceSet::new(2, 2, 1.0, 0.1, 1.0).unwrap();
        // Arm 0: V = 10 I with zero estimate.
        for _ in 0..9 {
            set.update(0, &v(&[1.0, 0.0]), 0.0).unwrap();
            set.update(0, &v(&[0.0, 1.0]), 0.0).unwrap();
        }
        assert_relative_eq!(set.arm(0).gram()[(0, 0)], 10.0);
        let s = v(&[0.6, 0.8]);
        assert_relative_eq!(set.arm(0).width(&s), (0.1f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(set.arm(1).width(&s), 1.0, epsilon = 1e-12);
        assert_eq!(select_arm_ucb(&set, &s), 1);

        let single = ConfidenceSet::new(1, 2, 1.0, 0.1, 1.0).unwrap();
        assert_eq!(select_arm_ucb(&single, &s), 0);
    }

    #[test]
    fn feasible_arm_sets() {
        let mut set = ConfidenceSet::new(3, 1, 1.0, 0.1, 1.0).unwrap();
        for (a, mean) in [1.0, 0.95, 0.0].into_iter().enumerate() {
            for _ in 0..10_000 {
                set.update(a, &v(&[1.0]), mean).unwrap();
            }
        }
        let s = v(&[1.0]);
        let (lo, hi) = payoff_interval(&set, 0, &s);
        assert_relative_eq!(hi - lo, 2.0 * set.beta() / 10_001f64.sqrt(), epsilon = 1e-12);
        assert!(hi - lo < 0.2);
        assert_eq!(feasible_arms(&set, &s), vec![0, 1]);

        // Wide intervals admit everything.
        let wide = ConfidenceSet::new(3, 1, 1.0, 1e-12, 1.0).unwrap();
        assert_eq!(feasible_arms(&wide, &s), vec![0, 1, 2]);
    }

    #[test]
    fn feasible_set_never_empty_and_contains_ucb_arm() {
        let set = random_set(4, 3, 200, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let f = feasible_arms(&set, &s);
            assert!(f.contains(&select_arm_ucb(&set, &s)));
        }
    }

    #[test]
    fn deterministic_schedule() {
        assert!(deterministic_fires(1));
        assert!(deterministic_fires(4));
        assert!(!deterministic_fires(5));
        assert_eq!((1..=10_000).filter(|&t| deterministic_fires(t)).count(), 100);
        let set = random_set(2, 2, 10, 4);
        let mut s = linear(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(update_deterministic(&mut s, &set, 4).unwrap());
        assert_eq!(s.theta_tilde()[0], *set.arm(0).theta_hat());
        assert!(!update_deterministic(&mut s, &set, 5).unwrap());
        assert!(update_deterministic(&mut s, &set, 0).is_err());
    }

    #[test]
    fn feasible_greedy_rules() {
        let set = random_set(2, 2, 30, 5);
        let inside = PolicyState::new(Algorithm::FeasibleGreedy, theta_hats(&set));
        let mut s = inside.clone();
        assert!(!update_feasible_greedy(&mut s, &set, 1).unwrap());
        assert_eq!(s, inside);

        let mut s = linear(&[&[50.0, 0.0], &[0.0, 50.0]]);
        assert!(update_feasible_greedy(&mut s, &set, 2).unwrap());
        assert_eq!(s.theta_tilde(), theta_hats(&set).as_slice());
        assert_eq!(s.change_count(), 1);
        assert_eq!(s.last_change_round(), Some(2));

        // Exactly on the boundary stays put.
        let center = set.stacked_theta_hat();
        let dir = DVector::from_fn(4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let dist = set.distance(&(&center + &dir)).unwrap();
        let boundary = &center + dir * (set.beta() / dist);
        let on = set.distance(&boundary).unwrap();
        if on <= set.beta() {
            let mut s = PolicyState::new(Algorithm::FeasibleGreedy, unstack(&boundary, 2, 2).unwrap());
            assert!(!update_feasible_greedy(&mut s, &set, 3).unwrap());
        }
    }

    #[test]
    fn feasible_conservative_lands_on_boundary() {
        let set = random_set(3, 2, 40, 6);
        let mut s = linear(&[&[9.0, 0.0], &[0.0, 9.0], &[-9.0, 0.0]]);
        assert!(update_feasible_conservative(&mut s, &set, 1).unwrap());
        let dist = set.distance_of(s.theta_tilde()).unwrap();
        assert!((dist - set.beta()).abs() < 1e-8);
        assert!(set.contains(s.theta_tilde()).unwrap());
        let before = s.clone();
        assert!(!update_feasible_conservative(&mut s, &set, 2).unwrap());
        assert_eq!(s, before);

        let inside = PolicyState::new(Algorithm::FeasibleConservative, theta_hats(&set));
        let mut s = inside.clone();
        assert!(!update_feasible_conservative(&mut s, &set, 3).unwrap());
        assert_eq!(s, inside);
    }

    #[test]
    fn feasible_conservative_prior_ball() {
        let set = ConfidenceSet::new(2, 1, 1.0, 0.5, 1.0).unwrap();
        let beta = set.beta();
        let mut s = linear(&[&[2.0 * beta], &[0.0]]);
        assert!(update_feasible_conservative(&mut s, &set, 1).unwrap());
        assert_relative_eq!(s.theta_tilde()[0][0], beta, epsilon = 1e-9);
        assert_relative_eq!(s.theta_tilde()[1][0], 0.0);
    }

    #[test]
    fn rs_updates_skip_when_inside() {
        let set = random_set(3, 2, 50, 7);
        let map = DifferenceMap::new(3, 2).unwrap();
        let cfg = OptimizerConfig::default();
        let start = PolicyState::new(Algorithm::RsGreedy, theta_hats(&set));
        let mut s = start.clone();
        assert!(!update_rs_greedy(&mut s, &set, &map, &cfg, 1).unwrap());
        assert!(!update_rs_conservative(&mut s, &set, &map, &cfg, 1).unwrap());
        assert_eq!(s, start);
    }

    #[test]
    fn rs_updates_skip_when_boundaries_already_plausible() {
        // θ̃ is far outside C_t but is a scaled copy of θ̂: same boundaries.
        let set = random_set(3, 2, 80, 8);
        let map = DifferenceMap::new(3, 2).unwrap();
        let cfg = OptimizerConfig::default();
        let scaled: Vec<DVector<f64>> = theta_hats(&set).iter().map(|t| t * 40.0).collect();
        let mut s = PolicyState::new(Algorithm::RsConservative, scaled.clone());
        assert!(!set.contains(&scaled).unwrap());
        assert!(!update_rs_conservative(&mut s, &set, &map, &cfg, 1).unwrap());
        assert!(!update_rs_greedy(&mut s, &set, &map, &cfg, 1).unwrap());
        assert_eq!(s.change_count(), 0);
    }

    fn rotate_boundaries(params: &[DVector<f64>], deg: f64) -> Vec<DVector<f64>> {
        let (c, s) = (deg.to_radians().cos(), deg.to_radians().sin());
        params.iter().map(|p| v(&[c * p[0] - s * p[1], s * p[0] + c * p[1]])).collect()
    }

    #[test]
    fn rs_greedy_jumps_to_estimate_then_rests() {
        let set = random_set(3, 2, 400, 9);
        let map = DifferenceMap::new(3, 2).unwrap();
        let cfg = OptimizerConfig::default();
        let off = rotate_boundaries(&theta_hats(&set), 60.0);
        let off: Vec<DVector<f64>> = off.iter().map(|p| p * 3.0).collect();
        let mut s = PolicyState::new(Algorithm::RsGreedy, off);
        assert!(update_rs_greedy(&mut s, &set, &map, &cfg, 10).unwrap());
        assert_eq!(s.theta_tilde(), theta_hats(&set).as_slice());
        assert!(!update_rs_greedy(&mut s, &set, &map, &cfg, 11).unwrap());
        assert_eq!(s.change_count(), 1);
    }

    #[test]
    fn rs_conservative_improves_on_plain_projection() {
        let set = random_set(3, 2, 400, 10);
        let map = DifferenceMap::new(3, 2).unwrap();
        let cfg = OptimizerConfig::default();
        let off = rotate_boundaries(&theta_hats(&set), 30.0);
        let off: Vec<DVector<f64>> = off.iter().map(|p| p * 3.0).collect();
        let anchor = stack(&off);
        let mut s = PolicyState::new(Algorithm::RsConservative, off);
        assert!(update_rs_conservative(&mut s, &set, &map, &cfg, 3).unwrap());
        assert!(set.contains(s.theta_tilde()).unwrap());
        let committed = cosine_j(&map, &anchor, &s.stacked()).unwrap();
        let plain = cosine_j(&map, &anchor, &set.project(&anchor).unwrap()).unwrap();
        assert!(committed > plain, "{committed} <= {plain}");
    }

    #[test]
    fn linear_selection_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let s = PolicyState::random_init(Algorithm::GreedyLs, 4, 3, &mut rng);
            let factor = rng.gen_range(0.01..100.0);
            let scaled = PolicyState::new(
                Algorithm::GreedyLs,
                s.theta_tilde().iter().map(|p| p * factor).collect::<Vec<_>>(),
            );
            let ctx = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            assert_eq!(select_arm_linear(&s, &ctx), select_arm_linear(&scaled, &ctx));
        }
    }

    #[test]
    fn random_init_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = PolicyState::random_init(Algorithm::RsGreedy, 4, 5, &mut rng);
        for p in s.theta_tilde() {
            assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn clucb_budget_rule() {
        let mut set = ConfidenceSet::new(2, 1, 1.0, 0.1, 1.0).unwrap();
        for _ in 0..400 {
            set.update(0, &v(&[1.0]), 0.2).unwrap();
            set.update(1, &v(&[1.0]), 0.9).unwrap();
        }
        let s = v(&[1.0]);
        assert_eq!(select_arm_ucb(&set, &s), 1);

        // Plenty of banked baseline reward: the optimistic arm is allowed.
        let mut rich = ClucbBudget::new(2, 1);
        for _ in 0..50 {
            rich.record(0, 0, &s, 0.2);
        }
        assert_eq!(select_clucb(&set, &s, 0, 0.2, 0.1, &rich), 1);

        // Fresh budget, pessimistic value of one play is below (1-α)·baseline.
        let fresh = ClucbBudget::new(2, 1);
        let lcb = fresh.pessimistic_reward(&set, Some((1, &s)));
        let big_baseline = (lcb + 1.0) / 0.9;
        assert_eq!(select_clucb(&set, &s, 0, big_baseline, 0.1, &fresh), 0);

        // α = 1 leaves only the requirement that the pessimistic value is nonnegative.
        assert!(lcb >= 0.0);
        assert_eq!(select_clucb(&set, &s, 0, big_baseline, 1.0, &fresh), 1);

        // Optimistic arm coinciding with the baseline is simply played.
        assert_eq!(select_clucb(&set, &s, 1, 100.0, 0.1, &fresh), 1);
    }

    #[test]
    fn frozen_ucb_matches_live_rule_when_fresh() {
        let set = random_set(3, 4, 100, 14);
        let frozen = FrozenUcb::capture(&set);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let s = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            assert_eq!(frozen.select(&s), select_arm_ucb(&set, &s));
        }
    }

    #[test]
    fn rs_linucb_switches_on_determinant_doubling() {
        let mut set = ConfidenceSet::new(2, 2, 1.0, 0.1, 1.0).unwrap();
        let init = vec![DVector::zeros(2), DVector::zeros(2)];
        let mut learner = Learner::new(Algorithm::RsLinUcb, LearnerConfig::default(), &set, init, 0).unwrap();
        let base = set.joint_ln_det();
        let mut rounds = Vec::new();
        for t in 1..=50 {
            set.update(0, &v(&[1.0, 0.0]), 0.5).unwrap();
            if learner.update(&set, t).unwrap() {
                rounds.push((t, set.joint_ln_det()));
            }
        }
        // det grows as (1+t): doublings at t = 1, 3, 7, 15, 31.
        assert_eq!(rounds.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 3, 7, 15, 31]);
        assert!(rounds[0].1 > base);
        assert_eq!(learner.change_count(), 5);
    }
}
