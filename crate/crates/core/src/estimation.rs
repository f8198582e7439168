//! Per-arm online ridge regression and the joint confidence ellipsoid.
//!
//! Each arm keeps its own Gram matrix `V^a = λI + Σ s sᵀ` and moment vector
//! `b^a = Σ y s`. The joint confidence set is the ball
//! `{x : ‖x − θ̂‖_V ≤ β}` in the block-diagonal metric built from all arms,
//! with the radius
//!
//! ```text
//! β = √λ·L + sqrt(2·ln(1/δ) + ln(det V / λ^D)),   D = k·d
//! ```
//!
//! The norm is compared unsquared everywhere.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{EllipsoidRegion, BOUNDARY_SHRINK};

/// Online ridge state for a single arm.
#[derive(Debug, Clone)]
pub struct ArmEstimate {
    lambda: f64,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    // Kept in sync through Sherman–Morrison; used for confidence widths.
    gram_inv: DMatrix<f64>,
    theta_hat: DVector<f64>,
    pull_count: usize,
}

impl ArmEstimate {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::RejectedInput("context dimension must be positive".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::RejectedInput(format!("lambda must be positive, got {lambda}")));
        }
        let gram = DMatrix::identity(dim, dim) * lambda;
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::Numerical("initial Gram matrix not positive definite".into()))?;
        Ok(Self {
            lambda,
            gram,
            moment: DVector::zeros(dim),
            chol,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            theta_hat: DVector::zeros(dim),
            pull_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The Gram matrix `V`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Incrementally maintained `V⁻¹`.
    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// The moment vector `b = Σ y s`.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn pull_count(&self) -> usize {
        self.pull_count
    }

    pub fn ln_det(&self) -> f64 {
        self.chol.ln_determinant()
    }

    /// Applies one observation in place.
    pub fn update(&mut self, context: &DVector<f64>, reward: f64) -> Result<()> {
        check_dim(self.dim(), context.len())?;
        if !reward.is_finite() || context.iter().any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("non-finite context or reward".into()));
        }
        self.gram.ger(1.0, context, context, 1.0);
        self.moment.axpy(reward, context, 1.0);
        self.chol.rank_one_update(context, 1.0);
        sherman_morrison_update(&mut self.gram_inv, context);
        self.theta_hat = self.chol.solve(&self.moment);
        self.pull_count += 1;
        Ok(())
    }

    /// Value-returning form of [`ArmEstimate::update`].
    pub fn ridge_update(&self, context: &DVector<f64>, reward: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(context, reward)?;
        Ok(next)
    }

    /// `‖s‖_{V⁻¹}`.
    pub fn width(&self, context: &DVector<f64>) -> f64 {
        self.gram_inv.quadform_ref(context).max(0.0).sqrt()
    }

    /// `‖x‖_V` for a vector in this arm's parameter space.
    pub fn metric_norm(&self, x: &DVector<f64>) -> f64 {
        self.gram.quadform_ref(x).max(0.0).sqrt()
    }

    /// `‖V θ̂ − b‖`.
    pub fn residual_norm(&self) -> f64 {
        (&self.gram * &self.theta_hat - &self.moment).norm()
    }
}

/// Replaces `inv` (the inverse of a symmetric `A`) with the inverse of `A + s sᵀ`.
pub fn sherman_morrison_update(inv: &mut DMatrix<f64>, s: &DVector<f64>) {
    let inv_s = &*inv * s;
    let denom = 1.0 + s.dot(&inv_s);
    inv.ger(-1.0 / denom, &inv_s, &inv_s, 1.0);
}

trait QuadForm {
    fn quadform_ref(&self, x: &DVector<f64>) -> f64;
}

impl QuadForm for DMatrix<f64> {
    fn quadform_ref(&self, x: &DVector<f64>) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for j in 0..n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            let mut dot = 0.0;
            for i in 0..n {
                dot += col[i] * x[i];
            }
            acc += dot * xj;
        }
        acc
    }
}

/// Joint confidence set over the stacked arm parameters.
#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    estimates: Vec<ArmEstimate>,
    lambda: f64,
    delta: f64,
    param_bound: f64,
    noise_scale: f64,
    beta: f64,
}

impl ConfidenceSet {
    /// `param_bound` is `L`, the assumed bound on every `‖θ^a‖`.
    pub fn new(arms: usize, dim: usize, lambda: f64, delta: f64, param_bound: f64) -> Result<Self> {
        if arms == 0 {
            return Err(Error::RejectedInput("need at least one arm".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::RejectedInput(format!("delta must lie in (0,1), got {delta}")));
        }
        if !(param_bound.is_finite() && param_bound > 0.0) {
            return Err(Error::RejectedInput(format!(
                "parameter bound must be positive, got {param_bound}"
            )));
        }
        let estimates = (0..arms)
            .map(|_| ArmEstimate::new(dim, lambda))
            .collect::<Result<Vec<_>>>()?;
        let mut set = Self {
            estimates,
            lambda,
            delta,
            param_bound,
            noise_scale: 1.0,
            beta: 0.0,
        };
        set.beta = beta_bound(&set);
        Ok(set)
    }

    /// Multiplies the data-dependent part of the radius by `scale`, e.g. the
    /// noise standard deviation when rewards are not normalized to `σ = 1`.
    /// The default of 1 keeps the unscaled radius.
    pub fn with_noise_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::RejectedInput(format!("noise scale must be positive, got {scale}")));
        }
        self.noise_scale = scale;
        self.beta = beta_bound(&self);
        Ok(self)
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn arms(&self) -> usize {
        self.estimates.len()
    }

    pub fn dim(&self) -> usize {
        self.estimates[0].dim()
    }

    /// Dimension of the stacked parameter vector, `k·d`.
    pub fn joint_dim(&self) -> usize {
        self.arms() * self.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn arm(&self, a: usize) -> &ArmEstimate {
        &self.estimates[a]
    }

    pub fn estimates(&self) -> &[ArmEstimate] {
        &self.estimates
    }

    /// `ln det V` of the block-diagonal joint Gram matrix.
    pub fn joint_ln_det(&self) -> f64 {
        self.estimates.iter().map(ArmEstimate::ln_det).sum()
    }

    pub fn total_pulls(&self) -> usize {
        self.estimates.iter().map(ArmEstimate::pull_count).sum()
    }

    /// Records a reward for `arm` and refreshes the radius.
    pub fn update(&mut self, arm: usize, context: &DVector<f64>, reward: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::RejectedInput(format!(
                "arm {arm} out of range for {} arms",
                self.arms()
            )));
        }
        self.estimates[arm].update(context, reward)?;
        self.beta = beta_bound(self);
        Ok(())
    }

    pub fn stacked_theta_hat(&self) -> DVector<f64> {
        stack(self.estimates.iter().map(ArmEstimate::theta_hat))
    }

    /// `‖x − θ̂‖_V` in the block metric.
    pub fn distance(&self, candidate: &DVector<f64>) -> Result<f64> {
        check_dim(self.joint_dim(), candidate.len())?;
        let d = self.dim();
        let sq: f64 = self
            .estimates
            .iter()
            .enumerate()
            .map(|(a, est)| {
                let diff = candidate.rows(a * d, d) - est.theta_hat();
                est.gram.quadform_ref(&diff)
            })
            .sum();
        Ok(sq.max(0.0).sqrt())
    }

    /// Same as [`ConfidenceSet::distance`] for per-arm parameter lists.
    pub fn distance_of(&self, params: &[DVector<f64>]) -> Result<f64> {
        check_dim(self.arms(), params.len())?;
        for p in params {
            check_dim(self.dim(), p.len())?;
        }
        let sq: f64 = self
            .estimates
            .iter()
            .zip(params)
            .map(|(est, p)| est.gram.quadform_ref(&(p - est.theta_hat())))
            .sum();
        Ok(sq.max(0.0).sqrt())
    }

    pub fn contains(&self, params: &[DVector<f64>]) -> Result<bool> {
        Ok(self.distance_of(params)? <= self.beta)
    }

    /// M-metric projection of a stacked vector onto the set.
    pub fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        let dist = self.distance(point)?;
        if dist <= self.beta {
            return Ok(point.clone());
        }
        let center = self.stacked_theta_hat();
        Ok(&center + (point - &center) * (self.beta / dist * BOUNDARY_SHRINK))
    }

    /// The joint set as a dense ellipsoid (block-diagonal metric).
    pub fn as_region(&self) -> EllipsoidRegion {
        let d = self.dim();
        let n = self.joint_dim();
        let mut shape = DMatrix::zeros(n, n);
        for (a, est) in self.estimates.iter().enumerate() {
            shape.view_mut((a * d, a * d), (d, d)).copy_from(est.gram());
        }
        EllipsoidRegion::new_unchecked(self.stacked_theta_hat(), shape, self.beta)
    }

    /// Image of the set under `θ ↦ θ^i − θ^j`: center `θ̂^i − θ̂^j`, metric
    /// `((V^i)⁻¹ + (V^j)⁻¹)⁻¹`, same radius.
    pub fn pair_region(&self, i: usize, j: usize) -> Result<EllipsoidRegion> {
        if i >= self.arms() || j >= self.arms() || i == j {
            return Err(Error::RejectedInput(format!("invalid arm pair ({i}, {j})")));
        }
        let center = self.estimates[i].theta_hat() - self.estimates[j].theta_hat();
        let cov = self.estimates[i].gram_inv() + self.estimates[j].gram_inv();
        let shape = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("pair covariance not positive definite".into()))?
            .inverse();
        EllipsoidRegion::new(center, shape, self.beta)
    }
}

/// Radius of the confidence set for its current Gram matrices.
pub fn beta_bound(set: &ConfidenceSet) -> f64 {
    let joint_dim = set.joint_dim() as f64;
    let log_det_ratio = set.joint_ln_det() - joint_dim * set.lambda.ln();
    radius(set.lambda, set.param_bound, set.delta, log_det_ratio, set.noise_scale)
}

/// `√λ·L + sqrt(2 ln(1/δ) + ln(det V / λ^D))` given the log-determinant ratio.
pub fn beta_from_parts(lambda: f64, param_bound: f64, delta: f64, log_det_ratio: f64) -> f64 {
    radius(lambda, param_bound, delta, log_det_ratio, 1.0)
}

fn radius(lambda: f64, param_bound: f64, delta: f64, log_det_ratio: f64, noise_scale: f64) -> f64 {
    // Rank-one updates can only grow det V; clamp rounding noise at the prior.
    let log_det_ratio = log_det_ratio.max(0.0);
    lambda.sqrt() * param_bound + noise_scale * (2.0 * (1.0 / delta).ln() + log_det_ratio).sqrt()
}

/// Membership of a stacked candidate in the closed ball `‖x − θ̂‖_V ≤ β`.
pub fn in_confidence_set(set: &ConfidenceSet, candidate: &DVector<f64>) -> Result<bool> {
    Ok(set.distance(candidate)? <= set.beta())
}

/// Concatenates per-arm vectors into one stacked vector.
pub fn stack<'a>(blocks: impl IntoIterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let blocks: Vec<&DVector<f64>> = blocks.into_iter().collect();
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for b in blocks {
        out.rows_mut(offset, b.len()).copy_from(b);
        offset += b.len();
    }
    out
}

/// Splits a stacked vector into `arms` blocks of length `dim`.
pub fn unstack(stacked: &DVector<f64>, arms: usize, dim: usize) -> Result<Vec<DVector<f64>>> {
    check_dim(arms * dim, stacked.len())?;
    Ok((0..arms)
        .map(|a| stacked.rows(a * dim, dim).into_owned())
        .collect())
}
