//! PI² and its covariance-adapting variants.
//!
//! One update takes a batch of `K` rollouts with per-step parameter samples
//! and per-step costs. For every time step the cost-to-go is mapped to PI²
//! probabilities, giving a per-step mean (and, for PI²-CMA, a per-step
//! covariance). These are collapsed into a single update by a temporal
//! average that weights early steps more. Covariances are kept per DOF.

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DVector, DefaultAllocator, Dim, OMatrix};
use rand::Rng;

use crate::dmp::Trajectory;
use crate::error::{Error, Result};
use crate::es::{cmaes_adapt, CmaesConfig, CmaesState};
use crate::linalg::{add_weighted_outer, max_asymmetry, trace, SYMMETRY_TOL};
use crate::scalar::{cast, count, Real};
use crate::weighting::{
    cmaes_weights, effective_selection_mass, pi2_weights, GaussianSampler, GaussianSearchDistribution,
    ProbabilityWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExplorationMode {
    /// Fresh draw at every time step.
    TimeVarying,
    /// One draw per trial, applied only to the most active basis function.
    PerBasis,
    /// One draw per trial, held for the whole movement.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceUpdate {
    /// Plain PI²: the covariance is left alone.
    None,
    /// PI²-CMA: temporally averaged probability-weighted scatter.
    CemStyle,
    /// PI²-CMAES: evolution-path covariance and step-size adaptation.
    CmaesStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pi2Config<T: Real> {
    pub eliteness_h: T,
    pub trials_per_update: usize,
    pub exploration_mode: ExplorationMode,
    pub covariance_update: CovarianceUpdate,
    /// Variance added to every diagonal entry after each update.
    pub base_noise_level: T,
    /// Whether a noise-free rollout is evaluated alongside each batch.
    pub evaluation_rollout: bool,
    /// CMA-ES rates for [`CovarianceUpdate::CmaesStyle`]; `None` uses the
    /// defaults for the log-rank weights of `trials_per_update`.
    pub cmaes: Option<CmaesConfig<T>>,
}

impl<T: Real> Pi2Config<T> {
    pub fn new(eliteness_h: T, trials_per_update: usize) -> Self {
        Self {
            eliteness_h,
            trials_per_update,
            exploration_mode: ExplorationMode::Constant,
            covariance_update: CovarianceUpdate::None,
            base_noise_level: T::zero(),
            evaluation_rollout: true,
            cmaes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_update < 2 {
            return Err(Error::arg("at least two trials per update are required"));
        }
        if !(self.eliteness_h > T::zero()) {
            return Err(Error::arg("eliteness h must be positive"));
        }
        if !(self.base_noise_level >= T::zero()) {
            return Err(Error::arg("base noise level must be non-negative"));
        }
        if let Some(c) = &self.cmaes {
            c.validate()?;
        }
        Ok(())
    }

    /// CMA-ES rates used for `n` parameters per DOF.
    pub fn cmaes_config(&self, n: usize) -> Result<CmaesConfig<T>> {
        match self.cmaes {
            Some(c) => Ok(c),
            None => {
                let k = self.trials_per_update;
                let w = cmaes_weights::<T>(k, (k / 2).max(1))?;
                Ok(CmaesConfig::defaults(n, effective_selection_mass(&w)))
            }
        }
    }
}

/// `K` rollouts of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch<T: Real> {
    /// `offsets[k][d]` is the `N x B` matrix of parameter offsets that
    /// rollout `k` applied to DOF `d`, row `i` at step `i`.
    pub offsets: Vec<Vec<DMatrix<T>>>,
    /// Executed trajectories, one per rollout; may be left empty when the
    /// caller does not keep them.
    pub trajectories: Vec<Trajectory<T>>,
    /// `K x N` immediate costs.
    pub step_costs: DMatrix<T>,
    pub exploration_mode: ExplorationMode,
    /// Cost of the noise-free rollout evaluated with this batch, if any.
    /// Never used for learning.
    pub evaluation_cost: Option<T>,
}

impl<T: Real> RolloutBatch<T> {
    pub fn trials(&self) -> usize {
        self.offsets.len()
    }

    pub fn steps(&self) -> usize {
        self.step_costs.ncols()
    }

    pub fn validate(&self, dofs: usize, basis: usize) -> Result<()> {
        let k = self.trials();
        let n = self.steps();
        if k == 0 || self.step_costs.nrows() != k {
            return Err(Error::arg(format!(
                "{k} rollouts but {} rows of step costs",
                self.step_costs.nrows()
            )));
        }
        if !self.trajectories.is_empty() && self.trajectories.len() != k {
            return Err(Error::arg("trajectory count does not match rollout count"));
        }
        if self.trajectories.iter().any(|t| t.len() != n) {
            return Err(Error::arg("trajectories differ in length from the cost matrix"));
        }
        for per_dof in &self.offsets {
            if per_dof.len() != dofs || per_dof.iter().any(|m| m.shape() != (n, basis)) {
                return Err(Error::arg(format!(
                    "every rollout needs {dofs} offset matrices of shape {n}x{basis}"
                )));
            }
            if self.exploration_mode == ExplorationMode::Constant
                && per_dof.iter().any(|m| (1..n).any(|i| m.row(i) != m.row(0)))
            {
                return Err(Error::arg("constant exploration offsets vary over time"));
            }
        }
        if self.step_costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("step costs must be finite"));
        }
        Ok(())
    }

    pub fn total_costs(&self) -> Vec<T> {
        self.step_costs.row_iter().map(|r| r.sum()).collect()
    }
}

/// Outcome of one [`pi2_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport<T: Real> {
    pub noise_free_cost: Option<T>,
    pub mean_batch_cost: T,
    /// Mean eigenvalue of each DOF's sampling covariance after the update.
    pub exploration_magnitudes: Vec<T>,
    pub distributions: Vec<GaussianSearchDistribution<T>>,
    /// Per-DOF CMA-ES state; empty unless the covariance update is CMA-ES style.
    pub cmaes_states: Vec<CmaesState<T>>,
}

/// Argmax with ties going to the lower index.
fn most_active<T: Real>(row: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_val: Option<T> = None;
    for (i, v) in row.enumerate() {
        if best_val.is_none_or(|b| v > b) {
            best = i;
            best_val = Some(v);
        }
    }
    best
}

/// `N x n` exploration offsets for one rollout of one DOF.
///
/// `activations` is the `N x B` table of basis activations per step; it sets
/// `N` and, for [`ExplorationMode::PerBasis`], gates the draw.
pub fn generate_exploration<T: Real, R: Rng + ?Sized>(
    mode: ExplorationMode,
    dist: &GaussianSearchDistribution<T>,
    activations: &DMatrix<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let sampler = dist.sampler()?;
    exploration_from(mode, &sampler, dist.dim(), activations, rng)
}

pub(crate) fn exploration_from<T: Real, R: Rng + ?Sized>(
    mode: ExplorationMode,
    sampler: &GaussianSampler<T>,
    n: usize,
    activations: &DMatrix<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let steps = activations.nrows();
    let mut out = DMatrix::zeros(steps, n);
    match mode {
        ExplorationMode::Constant => {
            let eps = sampler.draw_offset(rng);
            for i in 0..steps {
                out.row_mut(i).copy_from(&eps.transpose());
            }
        }
        ExplorationMode::TimeVarying => {
            for i in 0..steps {
                out.row_mut(i).copy_from(&sampler.draw_offset(rng).transpose());
            }
        }
        ExplorationMode::PerBasis => {
            if activations.ncols() != n {
                return Err(Error::arg(format!(
                    "per-basis exploration needs {n} activation columns, got {}",
                    activations.ncols()
                )));
            }
            let eps = sampler.draw_offset(rng);
            for i in 0..steps {
                let b = most_active(activations.row(i).iter().copied());
                out[(i, b)] = eps[b];
            }
        }
    }
    Ok(out)
}

/// Reverse cumulative sum along each row: `S[k][i] = Σ_{j >= i} J[k][j]`.
pub fn cost_to_go<T: Real>(step_costs: &DMatrix<T>) -> DMatrix<T> {
    let (k, n) = step_costs.shape();
    let mut s = DMatrix::zeros(k, n);
    for r in 0..k {
        let mut acc = T::zero();
        for i in (0..n).rev() {
            acc += step_costs[(r, i)];
            s[(r, i)] = acc;
        }
    }
    s
}

/// Per-step probability-weighted means and covariances for one DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepUpdates<T: Real> {
    pub means: Vec<DVector<T>>,
    /// Scatter about the old mean; empty when not requested.
    pub covariances: Vec<DMatrix<T>>,
    /// `K x N` probabilities, column `i` for step `i`.
    pub weights: DMatrix<T>,
}

/// For each step `i`: PI² weights from the cost-to-go column, the weighted
/// mean of the sampled parameters, and the weighted scatter of the samples
/// about the old mean.
///
/// `offsets[k]` is rollout `k`'s `N x n` offset matrix for this DOF, so the
/// sampled parameters are `mean + offsets[k].row(i)`.
pub fn per_timestep_updates<T: Real>(
    offsets: &[DMatrix<T>],
    cost_to_go: &DMatrix<T>,
    eliteness_h: T,
    mean: &DVector<T>,
    with_covariance: bool,
) -> Result<TimestepUpdates<T>> {
    let k = offsets.len();
    let (rows, n_steps) = cost_to_go.shape();
    let n = mean.len();
    if rows != k || offsets.iter().any(|m| m.shape() != (n_steps, n)) {
        return Err(Error::arg("offsets and cost-to-go disagree in shape"));
    }
    let mut means = Vec::with_capacity(n_steps);
    let mut covariances = Vec::with_capacity(if with_covariance { n_steps } else { 0 });
    let mut weights = DMatrix::zeros(k, n_steps);
    let mut column = vec![T::zero(); k];
    for i in 0..n_steps {
        for (r, c) in column.iter_mut().enumerate() {
            *c = cost_to_go[(r, i)];
        }
        let p = pi2_weights(&column, eliteness_h)?;
        let mut m = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for (r, off) in offsets.iter().enumerate() {
            let theta = mean + off.row(i).transpose();
            m.axpy(p[r], &theta, T::one());
            if with_covariance && p[r] != T::zero() {
                let d = &theta - mean;
                add_weighted_outer(&mut cov, p[r], &d);
            }
            weights[(r, i)] = p[r];
        }
        means.push(m);
        if with_covariance {
            covariances.push(cov);
        }
    }
    Ok(TimestepUpdates {
        means,
        covariances,
        weights,
    })
}

/// Normalized temporal weights `N - i + 1` for steps `i = 1..=N`.
pub fn temporal_weights<T: Real>(n: usize) -> Vec<T> {
    let total = count::<T>(n * (n + 1) / 2);
    (0..n).map(|i| count::<T>(n - i) / total).collect()
}

/// Weighted average of per-step values with [`temporal_weights`].
pub fn temporal_average<T, R, C>(values: &[OMatrix<T, R, C>]) -> Result<OMatrix<T, R, C>>
where
    T: Real,
    R: Dim,
    C: Dim,
    DefaultAllocator: Allocator<R, C>,
{
    let first = values
        .first()
        .ok_or_else(|| Error::arg("temporal average of an empty sequence"))?;
    let (nr, nc) = first.shape_generic();
    if values.iter().any(|v| v.shape() != first.shape()) {
        return Err(Error::arg("temporal average over values of different shapes"));
    }
    let mut acc = OMatrix::<T, R, C>::zeros_generic(nr, nc);
    for (v, w) in values.iter().zip(temporal_weights::<T>(values.len())) {
        acc += v * w;
    }
    Ok(acc)
}

/// Mean eigenvalue (`trace / n`) of a symmetric covariance.
pub fn exploration_magnitude<T: Real>(covariance: &DMatrix<T>) -> Result<T> {
    let n = covariance.nrows();
    if n == 0 || covariance.ncols() != n {
        return Err(Error::arg("exploration magnitude needs a non-empty square matrix"));
    }
    if max_asymmetry(covariance) > cast(SYMMETRY_TOL) {
        return Err(Error::arg("covariance is not symmetric"));
    }
    Ok(trace(covariance) / count::<T>(n))
}

/// One parameter update from a rollout batch.
///
/// `dists` holds one distribution per DOF. `cmaes_states`, used only for
/// [`CovarianceUpdate::CmaesStyle`], holds one state per DOF; `None` starts
/// fresh paths.
pub fn pi2_update<T: Real>(
    batch: &RolloutBatch<T>,
    config: &Pi2Config<T>,
    dists: &[GaussianSearchDistribution<T>],
    cmaes_states: Option<&[CmaesState<T>]>,
) -> Result<UpdateReport<T>> {
    config.validate()?;
    let dofs = dists.len();
    if dofs == 0 {
        return Err(Error::arg("at least one DOF distribution is required"));
    }
    let basis = dists[0].dim();
    if dists.iter().any(|d| d.dim() != basis) {
        return Err(Error::arg("DOF distributions differ in dimension"));
    }
    batch.validate(dofs, basis)?;
    if let Some(states) = cmaes_states {
        if states.len() != dofs {
            return Err(Error::arg("one CMA-ES state per DOF is required"));
        }
    }

    let s = cost_to_go(&batch.step_costs);
    let with_cov = config.covariance_update != CovarianceUpdate::None;
    let cmaes_config = match config.covariance_update {
        CovarianceUpdate::CmaesStyle => Some(config.cmaes_config(basis)?),
        _ => None,
    };

    let mut distributions = Vec::with_capacity(dofs);
    let mut next_states = Vec::new();
    let mut magnitudes = Vec::with_capacity(dofs);
    let mut offsets = Vec::with_capacity(batch.trials());

    for (d, dist) in dists.iter().enumerate() {
        offsets.clear();
        offsets.extend(batch.offsets.iter().map(|per_dof| per_dof[d].clone()));
        let steps = per_timestep_updates(&offsets, &s, config.eliteness_h, &dist.mean, with_cov)?;
        let mean = temporal_average(&steps.means)?;

        let mut next = match config.covariance_update {
            CovarianceUpdate::None => GaussianSearchDistribution {
                mean,
                covariance: dist.covariance.clone(),
                step_size: dist.step_size,
            },
            CovarianceUpdate::CemStyle => GaussianSearchDistribution {
                mean,
                covariance: temporal_average(&steps.covariances)?,
                step_size: dist.step_size,
            },
            CovarianceUpdate::CmaesStyle => {
                let scatter = temporal_average(&steps.covariances)?;
                let per_step: Vec<DVector<T>> = steps.weights.column_iter().map(|c| c.into_owned()).collect();
                let averaged = ProbabilityWeights::normalized(temporal_average(&per_step)?.iter().copied().collect())?;
                let state = match cmaes_states {
                    Some(states) => states[d].clone(),
                    None => CmaesState::new(basis, dist.step_size),
                };
                let cfg = cmaes_config.as_ref().expect("set for CMA-ES updates");
                let (state, next) =
                    cmaes_adapt(&state, cfg, dist, mean, &scatter, effective_selection_mass(&averaged))?;
                next_states.push(state);
                next
            }
        };
        if config.base_noise_level > T::zero() {
            for q in 0..basis {
                next.covariance[(q, q)] += config.base_noise_level;
            }
        }
        magnitudes.push(exploration_magnitude(&next.effective_covariance())?);
        distributions.push(next);
    }

    let totals = batch.total_costs();
    let mean_batch_cost = totals.iter().fold(T::zero(), |a, &c| a + c) / count::<T>(totals.len());
    Ok(UpdateReport {
        noise_free_cost: batch.evaluation_cost,
        mean_batch_cost,
        exploration_magnitudes: magnitudes,
        distributions,
        cmaes_states: next_states,
    })
}
