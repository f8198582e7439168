//! Decision-boundary geometry.
//!
//! A policy `argmax_a sᵀθ̃^a` is determined by its pairwise boundaries
//! `ψ^{ij} = θ̃^i − θ̃^j`. [`DifferenceMap`] produces them all at once; the
//! cosine objective compares two stacked parameter vectors through their
//! boundaries only, i.e. under the inner product `xᵀJy` with `J = FᵀF`.
//! In two dimensions a policy is a cyclic sequence of arms separated by
//! boundary angles, which is what [`angular_ordering`] and
//! [`check_update_conditions`] work with.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::policies::PolicyState;

/// The linear map `F` stacking `θ^i − θ^j` for every pair `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceMap {
    arms: usize,
    dim: usize,
}

impl DifferenceMap {
    pub fn new(arms: usize, dim: usize) -> Result<Self> {
        if arms < 2 || dim == 0 {
            return Err(Error::RejectedInput(format!(
                "difference map needs k >= 2 and d >= 1, got k={arms}, d={dim}"
            )));
        }
        Ok(Self { arms, dim })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.arms * self.dim
    }

    pub fn pair_count(&self) -> usize {
        self.arms * (self.arms - 1) / 2
    }

    pub fn output_dim(&self) -> usize {
        self.pair_count() * self.dim
    }

    /// Pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.arms).flat_map(move |i| (i + 1..self.arms).map(move |j| (i, j)))
    }

    /// Position of the unordered pair `{i, j}` in [`DifferenceMap::pairs`].
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // Rows before i contribute (k-1) + (k-2) + ... + (k-i) pairs.
        i * (2 * self.arms - i - 1) / 2 + (j - i - 1)
    }

    /// `J x`, using `J = (k·I − 11ᵀ) ⊗ I_d`.
    pub fn apply_gram(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut sum = DVector::zeros(d);
        for a in 0..self.arms {
            sum += x.rows(a * d, d);
        }
        let k = self.arms as f64;
        let mut out = x * k;
        for a in 0..self.arms {
            out.rows_mut(a * d, d).axpy(-1.0, &sum, 1.0);
        }
        out
    }

    /// `xᵀ J y = (Fx)·(Fy)`.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.apply_gram(y))
    }
}

/// `F · stacked`: the block for pair `(i, j)` is `block_i − block_j`.
pub fn apply_difference_map(map: &DifferenceMap, stacked: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(map.input_dim(), stacked.len())?;
    let d = map.dim;
    let mut out = DVector::zeros(map.output_dim());
    for (p, (i, j)) in map.pairs().enumerate() {
        let block = stacked.rows(i * d, d) - stacked.rows(j * d, d);
        out.rows_mut(p * d, d).copy_from(&block);
    }
    Ok(out)
}

fn check_pair(map: &DifferenceMap, anchor: &DVector<f64>, candidate: &DVector<f64>) -> Result<()> {
    check_dim(map.input_dim(), anchor.len())?;
    check_dim(map.input_dim(), candidate.len())
}

/// Cosine of the angle between `F·anchor` and `F·candidate`.
pub fn cosine_j(map: &DifferenceMap, anchor: &DVector<f64>, candidate: &DVector<f64>) -> Result<f64> {
    check_pair(map, anchor, candidate)?;
    let j_cand = map.apply_gram(candidate);
    let aa = map.inner(anchor, anchor);
    let cc = candidate.dot(&j_cand);
    if aa <= 0.0 || cc <= 0.0 {
        return Err(Error::DegenerateDirection(
            "vector lies in the kernel of the difference map".into(),
        ));
    }
    let cos = anchor.dot(&j_cand) / (aa.sqrt() * cc.sqrt());
    Ok(cos.clamp(-1.0, 1.0))
}

/// Gradient of [`cosine_j`] with respect to `candidate`:
///
/// `(J a · (φᵀJφ) − J φ · (aᵀJφ)) / (‖Fa‖ · (φᵀJφ)^{3/2})`
pub fn grad_cosine_j(
    map: &DifferenceMap,
    anchor: &DVector<f64>,
    candidate: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_pair(map, anchor, candidate)?;
    let j_anchor = map.apply_gram(anchor);
    let j_cand = map.apply_gram(candidate);
    let aa = anchor.dot(&j_anchor);
    let cc = candidate.dot(&j_cand);
    if aa <= 0.0 || cc <= 0.0 {
        return Err(Error::DegenerateDirection(
            "vector lies in the kernel of the difference map".into(),
        ));
    }
    let ac = anchor.dot(&j_cand);
    let scale = 1.0 / (aa.sqrt() * cc * cc.sqrt());
    Ok((j_anchor * cc - j_cand * ac) * scale)
}

/// The set `{x : ‖x − center‖_M ≤ r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidRegion {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    radius: f64,
}

impl EllipsoidRegion {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, radius: f64) -> Result<Self> {
        let m = center.len();
        if shape.nrows() != m || shape.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: shape.nrows(),
            });
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::RejectedInput(format!("radius must be positive, got {radius}")));
        }
        let scale = shape.amax().max(1.0);
        if (&shape - shape.transpose()).amax() > 1e-9 * scale {
            return Err(Error::RejectedInput("shape matrix is not symmetric".into()));
        }
        if shape.clone().cholesky().is_none() {
            return Err(Error::RejectedInput("shape matrix is not positive definite".into()));
        }
        Ok(Self::new_unchecked(center, shape, radius))
    }

    pub(crate) fn new_unchecked(center: DVector<f64>, shape: DMatrix<f64>, radius: f64) -> Self {
        Self {
            center,
            shape,
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `‖x‖_M`.
    pub fn metric_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.shape * x)).max(0.0).sqrt()
    }

    /// `‖x − center‖_M`.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        self.metric_norm(&(x - &self.center))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.distance(x) <= self.radius
    }

    pub fn contains_origin(&self) -> bool {
        self.metric_norm(&self.center) <= self.radius
    }

    /// The point reflection `{−x : x ∈ self}`.
    pub fn negated(&self) -> Self {
        Self::new_unchecked(-&self.center, self.shape.clone(), self.radius)
    }
}

/// Closest point of `region` to `point` in the region's own metric.
pub fn project_onto_ellipsoid(point: &DVector<f64>, region: &EllipsoidRegion) -> DVector<f64> {
    let dist = region.distance(point);
    if dist <= region.radius {
        return point.clone();
    }
    &region.center + (point - &region.center) * (region.radius / dist * BOUNDARY_SHRINK)
}

/// Radial projections are scaled by this factor so that the result passes
/// the closed-set membership test despite rounding.
pub(crate) const BOUNDARY_SHRINK: f64 = 1.0 - 1e-12;

/// Whether some positive multiple of `direction` lies in `region`.
pub fn cone_membership(direction: &DVector<f64>, region: &EllipsoidRegion) -> Result<bool> {
    check_dim(region.dim(), direction.len())?;
    if region.contains_origin() {
        return Ok(true);
    }
    if direction.iter().all(|&x| x == 0.0) {
        return Err(Error::RejectedInput(
            "zero direction with the origin outside the region".into(),
        ));
    }
    // min_{α>0} ‖αψ − c‖²_M = cᵀMc − (ψᵀMc)²/(ψᵀMψ) when ψᵀMc > 0; otherwise
    // the infimum is approached as α → 0 and equals cᵀMc > r².
    let m_center = &region.shape * &region.center;
    let psi_m_c = direction.dot(&m_center);
    if psi_m_c <= 0.0 {
        return Ok(false);
    }
    let psi_m_psi = direction.dot(&(&region.shape * direction));
    let c_m_c = region.center.dot(&m_center);
    let min_sq = c_m_c - psi_m_c * psi_m_c / psi_m_psi;
    Ok(min_sq <= region.radius * region.radius)
}

/// Extreme arms of a planar policy in cyclic order, with the boundary angles
/// between neighbours.
///
/// `order[i]` is played for context angles in `(boundary_angles[i-1],
/// boundary_angles[i])`; `boundary_angles[i]` separates `order[i]` from
/// `order[i+1]` (cyclically). Angles are in `[0, 2π)` and increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicOrdering {
    pub order: Vec<usize>,
    pub boundary_angles: Vec<f64>,
}

impl CyclicOrdering {
    /// Equal as cyclic sequences (rotation allowed, reflection not).
    pub fn same_cycle(&self, other: &CyclicOrdering) -> bool {
        let n = self.order.len();
        if n != other.order.len() {
            return false;
        }
        if n == 0 {
            return true;
        }
        (0..n).any(|shift| (0..n).all(|i| self.order[(i + shift) % n] == other.order[i]))
    }

    /// Directed boundaries `(order[i], order[i+1], angle)`.
    pub fn boundaries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.order.len();
        (0..n).map(move |i| (self.order[i], self.order[(i + 1) % n], self.boundary_angles[i]))
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed angular difference `b − a` wrapped to `(−π, π]`.
fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (b - a).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

fn planar(params: &[DVector<f64>]) -> Result<Vec<[f64; 2]>> {
    params
        .iter()
        .map(|p| {
            check_dim(2, p.len())?;
            Ok([p[0], p[1]])
        })
        .collect()
}

/// Cyclic ordering of the extreme arms of a planar policy.
pub fn angular_ordering(arm_params: &[DVector<f64>]) -> Result<CyclicOrdering> {
    if arm_params.len() < 2 {
        return Err(Error::RejectedInput("need at least two arms".into()));
    }
    let pts = planar(arm_params)?;

    // Andrew's monotone chain; duplicates keep the lowest index, collinear
    // points are dropped.
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });
    idx.dedup_by(|b, a| pts[*a] == pts[*b]);
    if idx.len() < 2 {
        return Err(Error::DegeneratePolytope("all arm parameters coincide".into()));
    }

    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross(pts[lower[lower.len() - 2]], pts[lower[lower.len() - 1]], pts[i]) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross(pts[upper[upper.len() - 2]], pts[upper[upper.len() - 1]], pts[i]) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    let mut hull = lower;
    hull.extend(upper);

    // Outward normal of the CCW edge v_i -> v_{i+1} is (dy, -dx).
    let n = hull.len();
    let mut entries: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let a = pts[hull[i]];
            let b = pts[hull[(i + 1) % n]];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            (hull[i], wrap_angle(f64::atan2(-dx, dy)))
        })
        .collect();

    let start = (0..n)
        .min_by(|&a, &b| entries[a].1.total_cmp(&entries[b].1).then(entries[a].0.cmp(&entries[b].0)))
        .unwrap_or(0);
    entries.rotate_left(start);
    Ok(CyclicOrdering {
        order: entries.iter().map(|e| e.0).collect(),
        boundary_angles: entries.iter().map(|e| e.1).collect(),
    })
}

/// Unit directions of the two rays from the origin tangent to a planar
/// ellipse that does not contain the origin.
pub fn tangent_rays(region: &EllipsoidRegion) -> Result<[DVector<f64>; 2]> {
    check_dim(2, region.dim())?;
    if region.contains_origin() {
        return Err(Error::RejectedInput("origin lies inside the region".into()));
    }
    // u is tangent iff uᵀ[(Mc)(Mc)ᵀ − κM]u = 0 with κ = cᵀMc − r², uᵀMc > 0.
    let m = &region.shape;
    let mc = m * &region.center;
    let kappa = region.center.dot(&mc) - region.radius * region.radius;
    let a = &mc * mc.transpose() - m * kappa;
    let half_sum = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let half_diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    let off = 0.5 * (a[(0, 1)] + a[(1, 0)]);
    let amp = half_diff.hypot(off);
    if amp == 0.0 {
        return Err(Error::Numerical("tangent equation is degenerate".into()));
    }
    let phase = off.atan2(half_diff);
    let spread = (-half_sum / amp).clamp(-1.0, 1.0).acos();
    let mut rays = Vec::with_capacity(2);
    for two_phi in [phase + spread, phase - spread] {
        let phi = 0.5 * two_phi;
        let mut u = DVector::from_column_slice(&[phi.cos(), phi.sin()]);
        if u.dot(&mc) < 0.0 {
            u = -u;
        }
        rays.push(u);
    }
    let second = rays.pop().unwrap_or_else(|| DVector::zeros(2));
    let first = rays.pop().unwrap_or_else(|| DVector::zeros(2));
    Ok([first, second])
}

/// Direction in `cone(region)` with the smallest angle to `from` (planar).
pub fn closest_cone_direction(from: &DVector<f64>, region: &EllipsoidRegion) -> Result<DVector<f64>> {
    check_dim(2, from.len())?;
    if cone_membership(from, region)? {
        return Ok(from.normalize());
    }
    let [r1, r2] = tangent_rays(region)?;
    let ang = |u: &DVector<f64>| from.normalize().dot(u).clamp(-1.0, 1.0).acos();
    Ok(if ang(&r1) <= ang(&r2) { r1 } else { r2 })
}

/// Outcome of [`check_update_conditions`], one flag per condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionReport {
    /// The set of playable (extreme) arms is unchanged.
    pub playable_unchanged: bool,
    /// The cyclic order of the playable arms is unchanged.
    pub same_ordering: bool,
    /// Every old boundary is adjacent to its updated counterpart in the merged angle set.
    pub boundaries_adjacent: bool,
    /// Every moved boundary is the smallest rotation into its plausible cone.
    pub minimal_changes: bool,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.playable_unchanged && self.same_ordering && self.boundaries_adjacent && self.minimal_changes
    }
}

const ANGLE_TOL: f64 = 1e-6;

/// Checks the four planar conditions under which a policy update cannot
/// increase expected regret. `cones[p]` is the plausible boundary region
/// `{θ^i − θ^j}` for the `p`-th pair `i < j` in [`DifferenceMap::pairs`] order.
pub fn check_update_conditions(
    old: &PolicyState,
    new: &PolicyState,
    cones: &[EllipsoidRegion],
) -> Result<ConditionReport> {
    let old_params = old.theta_tilde();
    let new_params = new.theta_tilde();
    check_dim(old_params.len(), new_params.len())?;
    for p in old_params.iter().chain(new_params) {
        if p.len() != 2 {
            return Err(Error::RejectedInput(format!(
                "update conditions are defined for d = 2, got d = {}",
                p.len()
            )));
        }
    }
    let map = DifferenceMap::new(old_params.len(), 2)?;
    check_dim(map.pair_count(), cones.len())?;

    let old_ord = angular_ordering(old_params)?;
    let new_ord = angular_ordering(new_params)?;

    let mut old_set = old_ord.order.clone();
    let mut new_set = new_ord.order.clone();
    old_set.sort_unstable();
    new_set.sort_unstable();
    let playable_unchanged = old_set == new_set;
    let same_ordering = old_ord.same_cycle(&new_ord);

    // Merged angle set: (angle, from, to, is_new).
    let mut omega: Vec<(f64, usize, usize, bool)> = old_ord
        .boundaries()
        .map(|(a, b, ang)| (ang, a, b, false))
        .chain(new_ord.boundaries().map(|(a, b, ang)| (ang, a, b, true)))
        .collect();
    omega.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.3.cmp(&y.3)));
    let n = omega.len();
    let boundaries_adjacent = omega.iter().enumerate().filter(|(_, e)| !e.3).all(|(pos, e)| {
        let counterpart = omega.iter().find(|o| o.3 && o.1 == e.1 && o.2 == e.2);
        match counterpart {
            None => false,
            Some(c) if angle_diff(e.0, c.0).abs() <= ANGLE_TOL => true,
            Some(_) => {
                let prev = &omega[(pos + n - 1) % n];
                let next = &omega[(pos + 1) % n];
                [prev, next].iter().any(|o| o.3 && o.1 == e.1 && o.2 == e.2)
            }
        }
    });

    let mut minimal_changes = true;
    for (a, b, old_angle) in old_ord.boundaries() {
        let Some((_, _, new_angle)) = new_ord.boundaries().find(|x| x.0 == a && x.1 == b) else {
            minimal_changes = false;
            continue;
        };
        if angle_diff(old_angle, new_angle).abs() <= ANGLE_TOL {
            continue;
        }
        let region = &cones[map.pair_index(a, b)];
        let region = if a < b { region.clone() } else { region.negated() };
        let psi_old = &old_params[a] - &old_params[b];
        let psi_new = &new_params[a] - &new_params[b];
        let target = closest_cone_direction(&psi_old, &region)?;
        let gap = psi_new.normalize().dot(&target).clamp(-1.0, 1.0).acos();
        if gap > ANGLE_TOL {
            minimal_changes = false;
        }
    }

    Ok(ConditionReport {
        playable_unchanged,
        same_ordering,
        boundaries_adjacent,
        minimal_changes,
    })
}
