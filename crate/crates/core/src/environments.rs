//! Reward generators: seeded synthetic linear instances and the IHDP
//! semi-simulated two-arm task, plus Monte Carlo policy evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::policies::linear_argmax;

pub const DEFAULT_SIGMA: f64 = 0.1;
pub const IHDP_COVARIATES: usize = 25;
pub const IHDP_SUBJECTS: usize = 747;
pub const IHDP_REALIZATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextDistribution {
    /// Uniform on the unit sphere in `R^d`.
    #[default]
    UnitSphere,
}

impl ContextDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match self {
            ContextDistribution::UnitSphere => loop {
                let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n > 1e-300 {
                    break g / n;
                }
            },
        }
    }
}

/// Ground truth for a synthetic linear bandit.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    pub true_theta: Vec<DVector<f64>>,
    pub sigma: f64,
    pub context_dist: ContextDistribution,
    pub seed: u64,
}

impl BanditInstance {
    pub fn arms(&self) -> usize {
        self.true_theta.len()
    }

    pub fn dim(&self) -> usize {
        self.true_theta.first().map_or(0, |t| t.len())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn expected_reward(&self, context: &DVector<f64>, arm: usize) -> f64 {
        context.dot(&self.true_theta[arm])
    }

    pub fn optimal_arm(&self, context: &DVector<f64>) -> usize {
        linear_argmax(&self.true_theta, context)
    }

    /// The arm that is optimal for the largest share of `n` contexts drawn
    /// with `seed`. Every arm has mean reward zero under sphere-uniform
    /// contexts, so "best mean" is resolved by this share instead.
    pub fn baseline_arm(&self, n: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wins = vec![0usize; self.arms()];
        for _ in 0..n {
            let s = self.context_dist.sample(self.dim(), &mut rng);
            wins[self.optimal_arm(&s)] += 1;
        }
        // Ties resolved towards the lowest index.
        let best = wins.iter().copied().max().unwrap_or(0);
        wins.iter().position(|&w| w == best).unwrap_or(0)
    }
}

/// Draws `k` i.i.d. standard-normal arm parameters, each normalized to unit length.
pub fn sample_instance(k: usize, d: usize, seed: u64) -> Result<BanditInstance> {
    if k < 2 {
        return Err(Error::RejectedInput(format!("need at least two arms, got {k}")));
    }
    if d < 1 {
        return Err(Error::RejectedInput("context dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_theta = (0..k)
        .map(|_| ContextDistribution::UnitSphere.sample(d, &mut rng))
        .collect();
    Ok(BanditInstance {
        true_theta,
        sigma: DEFAULT_SIGMA,
        context_dist: ContextDistribution::UnitSphere,
        seed,
    })
}

/// Result of playing one arm for one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOutcome {
    pub reward: f64,
    pub expected_reward: f64,
    pub optimal_expected: f64,
    pub instantaneous_regret: f64,
}

impl EnvOutcome {
    fn from_means(means: &[f64], action: usize, noise_draw: f64) -> Self {
        let optimal_expected = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected_reward = means[action];
        Self {
            reward: expected_reward + noise_draw,
            expected_reward,
            optimal_expected,
            instantaneous_regret: (optimal_expected - expected_reward).max(0.0),
        }
    }
}

/// `noise_draw` is the already-scaled Gaussian noise for this round.
pub fn env_step(instance: &BanditInstance, context: &DVector<f64>, action: usize, noise_draw: f64) -> Result<EnvOutcome> {
    check_dim(instance.dim(), context.len())?;
    if action >= instance.arms() {
        return Err(Error::RejectedInput(format!("arm {action} out of range")));
    }
    let means: Vec<f64> = instance.true_theta.iter().map(|t| context.dot(t)).collect();
    Ok(EnvOutcome::from_means(&means, action, noise_draw))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// Sample mean and `s/√n`; the error is zero for fewer than two samples.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, stderr: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }
}

/// Expected rewards of `policy` at each context under the true parameters.
pub fn policy_rewards(
    instance: &BanditInstance,
    contexts: &[DVector<f64>],
    policy: impl Fn(&DVector<f64>) -> usize,
) -> Vec<f64> {
    contexts
        .iter()
        .map(|s| instance.expected_reward(s, policy(s)))
        .collect()
}

pub fn sample_contexts(instance: &BanditInstance, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| instance.context_dist.sample(instance.dim(), &mut rng))
        .collect()
}

/// Expected reward `E_s[sᵀθ^{π(s)}]` of the linear policy `policy_params`.
pub fn expected_reward_mc(
    policy_params: &[DVector<f64>],
    instance: &BanditInstance,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::RejectedInput("n_samples must be positive".into()));
    }
    check_dim(instance.arms(), policy_params.len())?;
    for p in policy_params {
        check_dim(instance.dim(), p.len())?;
    }
    let contexts = sample_contexts(instance, n_samples, seed);
    let rewards = policy_rewards(instance, &contexts, |s| linear_argmax(policy_params, s));
    Ok(McEstimate::from_samples(&rewards))
}

/// One subject in one IHDP realization.
#[derive(Debug, Clone, PartialEq)]
pub struct IhdpRecord {
    pub subject: usize,
    pub covariates: DVector<f64>,
    pub treatment: bool,
    pub y_factual: f64,
    pub y_cfactual: f64,
    pub mu0: f64,
    pub mu1: f64,
}

impl IhdpRecord {
    /// Covariates with a trailing intercept.
    pub fn context(&self) -> DVector<f64> {
        let n = self.covariates.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.covariates[i] } else { 1.0 })
    }

    /// Arm 0 leaves the subject untreated, arm 1 treats.
    pub fn means(&self) -> [f64; 2] {
        [self.mu0, self.mu1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IhdpDataset {
    realizations: BTreeMap<usize, Vec<IhdpRecord>>,
}

impl IhdpDataset {
    /// Builds a dataset from in-memory realizations, checking only that each is nonempty.
    pub fn from_realizations(realizations: BTreeMap<usize, Vec<IhdpRecord>>) -> Result<Self> {
        if realizations.is_empty() || realizations.values().any(|r| r.is_empty()) {
            return Err(Error::RejectedInput("empty IHDP realization".into()));
        }
        Ok(Self { realizations })
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realization_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.realizations.keys().copied()
    }

    pub fn realization(&self, id: usize) -> Option<&[IhdpRecord]> {
        self.realizations.get(&id).map(|v| v.as_slice())
    }

    /// Context dimension after the intercept is appended.
    pub fn context_dim(&self) -> usize {
        self.realizations
            .values()
            .next()
            .and_then(|r| r.first())
            .map_or(0, |r| r.covariates.len() + 1)
    }
}

/// Expected layout of an IHDP file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IhdpLayout {
    pub realizations: usize,
    pub subjects: usize,
}

impl Default for IhdpLayout {
    fn default() -> Self {
        Self {
            realizations: IHDP_REALIZATIONS,
            subjects: IHDP_SUBJECTS,
        }
    }
}

const IHDP_FIXED_COLUMNS: [&str; 7] = [
    "realization",
    "subject",
    "treatment",
    "y_factual",
    "y_cfactual",
    "mu0",
    "mu1",
];

fn ihdp_header() -> Vec<String> {
    IHDP_FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=IHDP_COVARIATES).map(|i| format!("x{i}")))
        .collect()
}

/// Loads the full 100 × 747 IHDP benchmark.
pub fn load_ihdp(path: &Path) -> Result<IhdpDataset> {
    load_ihdp_with_layout(path, IhdpLayout::default())
}

/// Loads an IHDP file, requiring `layout.realizations` realizations of
/// `layout.subjects` records each. Rows are numbered from 1 after the header.
pub fn load_ihdp_with_layout(path: &Path, layout: IhdpLayout) -> Result<IhdpDataset> {
    let format_err = |row: usize, column: &str, message: String| Error::Format {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let header = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let expected = ihdp_header();
    for (i, name) in expected.iter().enumerate() {
        match header.get(i) {
            Some(h) if h.trim() == name => {}
            Some(h) => return Err(format_err(0, name, format!("expected header '{name}', found '{h}'"))),
            None => return Err(format_err(0, name, "missing column".into())),
        }
    }
    if header.len() > expected.len() {
        return Err(format_err(0, &header[expected.len()], "unexpected extra column".into()));
    }

    let mut realizations: BTreeMap<usize, Vec<IhdpRecord>> = BTreeMap::new();
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if rec.len() != expected.len() {
            let column = expected.get(rec.len()).map_or("x25", |s| s.as_str());
            return Err(format_err(
                row,
                column,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let cell = rec[i].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| format_err(row, &expected[i], format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(format_err(row, &expected[i], format!("non-finite value '{cell}'")));
            }
            Ok(v)
        };
        let int = |i: usize| -> Result<usize> {
            let cell = rec[i].trim();
            cell.parse()
                .map_err(|_| format_err(row, &expected[i], format!("not a nonnegative integer: '{cell}'")))
        };
        let realization = int(0)?;
        let subject = int(1)?;
        let treatment = match rec[2].trim() {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => return Err(format_err(row, "treatment", format!("expected 0 or 1, found '{other}'"))),
        };
        let covariates = (0..IHDP_COVARIATES)
            .map(|j| num(IHDP_FIXED_COLUMNS.len() + j))
            .collect::<Result<Vec<f64>>>()?;
        realizations.entry(realization).or_default().push(IhdpRecord {
            subject,
            covariates: DVector::from_vec(covariates),
            treatment,
            y_factual: num(3)?,
            y_cfactual: num(4)?,
            mu0: num(5)?,
            mu1: num(6)?,
        });
    }

    let last_row = realizations.values().map(Vec::len).sum::<usize>();
    if realizations.len() != layout.realizations {
        return Err(format_err(
            last_row,
            "realization",
            format!("expected {} realizations, found {}", layout.realizations, realizations.len()),
        ));
    }
    for (id, recs) in &realizations {
        if recs.len() != layout.subjects {
            return Err(format_err(
                last_row,
                "subject",
                format!("realization {id} has {} records, expected {}", recs.len(), layout.subjects),
            ));
        }
    }
    IhdpDataset::from_realizations(realizations)
}

/// Plays `action` (0 = control, 1 = treated) on `record`.
pub fn ihdp_step(record: &IhdpRecord, action: usize, noise_draw: f64) -> Result<EnvOutcome> {
    if action > 1 {
        return Err(Error::RejectedInput(format!("IHDP has two arms, got arm {action}")));
    }
    Ok(EnvOutcome::from_means(&record.means(), action, noise_draw))
}

/// Exact average expected outcome of `policy` over the subjects of one realization.
pub fn ihdp_policy_value(records: &[IhdpRecord], policy: impl Fn(&DVector<f64>) -> usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let total: f64 = records.iter().map(|r| r.means()[policy(&r.context()).min(1)]).sum();
    total / records.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    #[test]
    fn instances_are_reproducible_and_unit_norm() {
        let a = sample_instance(4, 5, 17).unwrap();
        let b = sample_instance(4, 5, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arms(), 4);
        assert_eq!(a.dim(), 5);
        for t in &a.true_theta {
            assert!((t.norm() - 1.0).abs() < 1e-12);
        }
        assert_ne!(a, sample_instance(4, 5, 18).unwrap());
        assert!(sample_instance(1, 5, 0).is_err());
        assert!(sample_instance(2, 0, 0).is_err());
        assert_eq!(a.sigma, 0.1);
    }

    #[test]
    fn env_step_regret() {
        let inst = sample_instance(3, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = inst.context_dist.sample(4, &mut rng);
            let best = inst.optimal_arm(&s);
            assert_eq!(env_step(&inst, &s, best, 0.3).unwrap().instantaneous_regret, 0.0);
            for a in 0..3 {
                let out = env_step(&inst, &s, a, 0.0).unwrap();
                assert!(out.instantaneous_regret >= 0.0);
                assert_eq!(out.reward, out.expected_reward);
            }
        }
        assert!(env_step(&inst, &DVector::zeros(4), 3, 0.0).is_err());
        assert!(env_step(&inst, &DVector::zeros(3), 0, 0.0).is_err());
    }

    #[test]
    fn empirical_reward_mean() {
        let inst = sample_instance(2, 3, 4).unwrap();
        let s = DVector::from_column_slice(&[0.6, 0.0, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| {
                let eta = inst.sigma * rng.sample::<f64, _>(StandardNormal);
                env_step(&inst, &s, 1, eta).unwrap().reward
            })
            .sum();
        let analytic = inst.expected_reward(&s, 1);
        assert!((total / n as f64 - analytic).abs() < 4.0 * inst.sigma / (n as f64).sqrt());
    }

    #[test]
    fn sphere_contexts_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 1..6 {
            let s = ContextDistribution::UnitSphere.sample(d, &mut rng);
            assert_relative_eq!(s.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mc_single_arm_is_zero() {
        let mut inst = sample_instance(2, 3, 7).unwrap();
        inst.true_theta.truncate(1);
        let est = expected_reward_mc(&inst.true_theta.clone(), &inst, 10_000, 8).unwrap();
        assert!(est.mean.abs() < 3.0 * est.stderr);
    }

    #[test]
    fn mc_two_opposite_arms() {
        let inst = BanditInstance {
            true_theta: vec![DVector::from_column_slice(&[1.0, 0.0]), DVector::from_column_slice(&[-1.0, 0.0])],
            sigma: 0.1,
            context_dist: ContextDistribution::UnitSphere,
            seed: 0,
        };
        let est = expected_reward_mc(&inst.true_theta.clone(), &inst, 10_000, 9).unwrap();
        let analytic = 2.0 / std::f64::consts::PI;
        assert!((est.mean - analytic).abs() < 3.0 * est.stderr, "{est:?}");

        let zeros = vec![DVector::zeros(2), DVector::zeros(2)];
        let est = expected_reward_mc(&zeros, &inst, 10_000, 10).unwrap();
        assert!(est.mean.abs() < 3.0 * est.stderr);
        assert_eq!(
            expected_reward_mc(&zeros, &inst, 10_000, 10).unwrap(),
            est,
            "same seed must reproduce"
        );
        assert!(expected_reward_mc(&zeros, &inst, 0, 10).is_err());
    }

    #[test]
    fn mc_estimate_arithmetic() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(e.mean, 2.5);
        // s² = 5/3, s/√4
        assert_relative_eq!(e.stderr, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(McEstimate::from_samples(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn baseline_arm_is_deterministic() {
        let inst = sample_instance(4, 5, 11).unwrap();
        let b = inst.baseline_arm(20_000, 1);
        assert_eq!(b, inst.baseline_arm(20_000, 1));
        assert!(b < 4);
    }

    fn ihdp_line(realization: usize, subject: usize, covariates: usize) -> String {
        let mut fields = vec![
            realization.to_string(),
            subject.to_string(),
            (subject % 2).to_string(),
            "1.5".into(),
            "2.5".into(),
            "1.0".into(),
            format!("{}", 1.0 + subject as f64 * 0.1),
        ];
        fields.extend((0..covariates).map(|j| format!("{}", (j as f64) * 0.01 - subject as f64)));
        fields.join(",")
    }

    fn write_ihdp(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", ihdp_header().join(",")).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn ihdp_round_trip() {
        let lines: Vec<String> = (1..=2)
            .flat_map(|r| (1..=3).map(move |s| ihdp_line(r, s, 25)))
            .collect();
        let f = write_ihdp(&lines);
        let layout = IhdpLayout {
            realizations: 2,
            subjects: 3,
        };
        let data = load_ihdp_with_layout(f.path(), layout).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.context_dim(), 26);
        let recs = data.realization(2).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs[0].treatment);
        let ctx = recs[0].context();
        assert_eq!(ctx.len(), 26);
        assert_eq!(ctx[25], 1.0);
        assert_relative_eq!(recs[2].mu1, 1.3);

        // Strict loader wants the full benchmark.
        assert!(matches!(load_ihdp(f.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn ihdp_short_row_names_row() {
        let mut lines: Vec<String> = (1..=3).map(|s| ihdp_line(1, s, 25)).collect();
        lines[1] = ihdp_line(1, 2, 24);
        let f = write_ihdp(&lines);
        let layout = IhdpLayout {
            realizations: 1,
            subjects: 3,
        };
        match load_ihdp_with_layout(f.path(), layout) {
            Err(Error::Format { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "x25");
            }
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn ihdp_bad_cell_names_column() {
        let mut lines: Vec<String> = (1..=2).map(|s| ihdp_line(1, s, 25)).collect();
        lines[0] = lines[0].replacen(",1.0,", ",abc,", 1);
        let f = write_ihdp(&lines);
        let layout = IhdpLayout {
            realizations: 1,
            subjects: 2,
        };
        match load_ihdp_with_layout(f.path(), layout) {
            Err(Error::Format { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "mu0");
            }
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn ihdp_regret_is_gap() {
        let rec = IhdpRecord {
            subject: 1,
            covariates: DVector::zeros(25),
            treatment: false,
            y_factual: 0.0,
            y_cfactual: 0.0,
            mu0: 2.0,
            mu1: 5.0,
        };
        assert_eq!(ihdp_step(&rec, 0, 0.0).unwrap().instantaneous_regret, 3.0);
        assert_eq!(ihdp_step(&rec, 1, 0.5).unwrap().instantaneous_regret, 0.0);
        assert_eq!(ihdp_step(&rec, 1, 0.5).unwrap().reward, 5.5);
        assert!(ihdp_step(&rec, 2, 0.0).is_err());
        assert_eq!(ihdp_policy_value(std::slice::from_ref(&rec), |_| 1), 5.0);
    }
}
