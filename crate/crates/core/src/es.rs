//! Black-box CEM and CMA-ES over real vectors.
//!
//! Both optimizers run the same loop: sample `K` candidates from the current
//! Gaussian, evaluate and sort them by cost, turn ranks into
//! [`ProbabilityWeights`], and re-estimate the distribution as a weighted
//! average. CEM re-estimates the covariance directly from the weighted
//! scatter about the old mean; CMA-ES blends that scatter with the previous
//! covariance and a rank-one evolution-path term, and adapts a separate
//! step size.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, eigen, recompose};
use crate::rng;
use crate::scalar::{cast, count, Real};
use crate::weighting::{
    cem_weights, cmaes_weights, effective_selection_mass, rank_order, GaussianSearchDistribution,
    ProbabilityWeights,
};

const SINGULAR_EIGENVALUE: f64 = 1e-300;
const INV_SQRT_FLOOR: f64 = 1e-20;

/// Evolution paths and step size carried between CMA-ES generations.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaesState<T: Real> {
    pub sigma_path: DVector<T>,
    pub covariance_path: DVector<T>,
    pub step_size: T,
    pub generation: usize,
}

impl<T: Real> CmaesState<T> {
    pub fn new(n: usize, step_size: T) -> Self {
        Self {
            sigma_path: DVector::zeros(n),
            covariance_path: DVector::zeros(n),
            step_size,
            generation: 0,
        }
    }
}

/// Learning rates of the CMA-ES update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaesConfig<T: Real> {
    pub c_sigma: T,
    pub d_sigma: T,
    pub c_cov: T,
    pub c_1: T,
    pub c_mu: T,
}

impl<T: Real> CmaesConfig<T> {
    /// Standard constants for dimension `n` and selection mass `mu_p`.
    pub fn defaults(n: usize, mu_p: T) -> Self {
        let nf = count::<T>(n);
        let one = T::one();
        let two = cast::<T>(2.0);
        let c_sigma = (mu_p + two) / (nf + mu_p + cast(5.0));
        let spread = ((mu_p - one) / (nf + one)).sqrt() - one;
        let d_sigma = one + two * if spread > T::zero() { spread } else { T::zero() } + c_sigma;
        let c_cov = (cast::<T>(4.0) + mu_p / nf) / (nf + cast(4.0) + two * mu_p / nf);
        let c_1 = two / ((nf + cast(1.3)).powi(2) + mu_p);
        let rank_mu = two * (mu_p - two + one / mu_p) / ((nf + two).powi(2) + mu_p);
        let c_mu = if rank_mu < one - c_1 { rank_mu } else { one - c_1 };
        Self {
            c_sigma,
            d_sigma,
            c_cov,
            c_1,
            c_mu,
        }
    }

    /// Freezes the step size and drops the rank-one and memory terms, which
    /// turns the CMA-ES update into the CEM update.
    pub fn reduced_to_cem(self) -> Self {
        Self {
            c_sigma: T::zero(),
            c_1: T::zero(),
            c_mu: T::one(),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(self.c_sigma) || !unit(self.c_cov) {
            return Err(Error::arg("c_sigma and c_cov must lie in [0, 1]"));
        }
        if self.c_1 < T::zero() || self.c_mu < T::zero() {
            return Err(Error::arg("c_1 and c_mu must be non-negative"));
        }
        if self.c_1 + self.c_mu > T::one() + T::default_epsilon() * cast(4.0) {
            return Err(Error::arg("c_1 + c_mu must not exceed 1"));
        }
        if !(self.d_sigma > T::zero()) {
            return Err(Error::arg("d_sigma must be positive"));
        }
        Ok(())
    }
}

/// Approximation of `E‖N(0, I)‖` in `n` dimensions.
pub fn expected_gaussian_norm<T: Real>(n: usize) -> T {
    let nf = count::<T>(n);
    nf.sqrt() * (T::one() - T::one() / (cast::<T>(4.0) * nf) + T::one() / (cast::<T>(21.0) * nf * nf))
}

fn check_samples<T: Real>(
    dist: &GaussianSearchDistribution<T>,
    samples: &[DVector<T>],
    weights: &ProbabilityWeights<T>,
) -> Result<()> {
    if samples.len() != weights.len() {
        return Err(Error::arg(format!(
            "{} samples but {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != dist.dim()) {
        return Err(Error::arg(format!(
            "sample has dimension {}, distribution has {}",
            s.len(),
            dist.dim()
        )));
    }
    Ok(())
}

/// `Σ P_k θ_k`.
pub fn weighted_mean<T: Real>(samples: &[DVector<T>], weights: &ProbabilityWeights<T>) -> DVector<T> {
    let n = samples.first().map_or(0, |s| s.len());
    samples
        .iter()
        .zip(weights.as_slice())
        .fold(DVector::zeros(n), |acc, (s, &w)| acc + s * w)
}

/// `Σ P_k (θ_k - center)(θ_k - center)ᵀ`.
pub fn weighted_scatter<T: Real>(
    samples: &[DVector<T>],
    weights: &ProbabilityWeights<T>,
    center: &DVector<T>,
) -> DMatrix<T> {
    let n = center.len();
    let mut acc = DMatrix::zeros(n, n);
    for (s, &w) in samples.iter().zip(weights.as_slice()) {
        if w == T::zero() {
            continue;
        }
        let d = s - center;
        linalg::add_weighted_outer(&mut acc, w, &d);
    }
    acc
}

/// CEM re-estimation: weighted mean, and weighted scatter about the old mean.
pub fn cem_update<T: Real>(
    dist: &GaussianSearchDistribution<T>,
    samples: &[DVector<T>],
    weights: &ProbabilityWeights<T>,
) -> Result<GaussianSearchDistribution<T>> {
    check_samples(dist, samples, weights)?;
    Ok(GaussianSearchDistribution {
        mean: weighted_mean(samples, weights),
        covariance: weighted_scatter(samples, weights, &dist.mean),
        step_size: dist.step_size,
    })
}

/// One CMA-ES generation from weighted samples.
pub fn cmaes_update<T: Real>(
    state: &CmaesState<T>,
    config: &CmaesConfig<T>,
    dist: &GaussianSearchDistribution<T>,
    samples: &[DVector<T>],
    weights: &ProbabilityWeights<T>,
) -> Result<(CmaesState<T>, GaussianSearchDistribution<T>)> {
    check_samples(dist, samples, weights)?;
    let new_mean = weighted_mean(samples, weights);
    let scatter = weighted_scatter(samples, weights, &dist.mean);
    cmaes_adapt(state, config, dist, new_mean, &scatter, effective_selection_mass(weights))
}

/// Step-size and covariance adaptation given an already computed mean update.
///
/// `scatter` is the weighted scatter of the samples about the *old* mean, in
/// parameter units; it is divided by `σ²` before entering the rank-μ term.
/// Used directly by PI²-CMAES, where mean and scatter come from temporal
/// averaging rather than from a single set of samples.
pub fn cmaes_adapt<T: Real>(
    state: &CmaesState<T>,
    config: &CmaesConfig<T>,
    dist: &GaussianSearchDistribution<T>,
    new_mean: DVector<T>,
    scatter: &DMatrix<T>,
    mu_p: T,
) -> Result<(CmaesState<T>, GaussianSearchDistribution<T>)> {
    config.validate()?;
    let n = dist.dim();
    if new_mean.len() != n || scatter.shape() != (n, n) {
        return Err(Error::arg("mean update or scatter has the wrong dimension"));
    }
    if state.sigma_path.len() != n || state.covariance_path.len() != n {
        return Err(Error::arg("evolution paths have the wrong dimension"));
    }
    let one = T::one();
    let two = cast::<T>(2.0);
    let sigma = dist.step_size;
    let cov = linalg::symmetrize(&dist.covariance);

    let decomposition = eigen(&cov);
    let smallest = decomposition.eigenvalues.min();
    if !(smallest >= cast::<T>(SINGULAR_EIGENVALUE)) {
        return Err(Error::Conditioning(format!(
            "smallest covariance eigenvalue is {smallest}"
        )));
    }
    let floor = cast::<T>(INV_SQRT_FLOOR);
    let inv_roots = decomposition
        .eigenvalues
        .map(|l| one / if l > floor { l } else { floor }.sqrt());
    let inv_sqrt = recompose(&decomposition.eigenvectors, &inv_roots);

    let displacement = (&new_mean - &dist.mean) / sigma;

    let c_s = config.c_sigma;
    let sigma_path = &state.sigma_path * (one - c_s)
        + &inv_sqrt * &displacement * (c_s * (two - c_s) * mu_p).sqrt();

    let chi = expected_gaussian_norm::<T>(n);
    let path_norm = sigma_path.norm();
    let new_sigma = sigma * (c_s / config.d_sigma * (path_norm / chi - one)).exp();

    let decay = one - (one - c_s).powi(2 * (state.generation as i32 + 1));
    let stalled = decay > T::zero()
        && path_norm / decay.sqrt() >= (cast::<T>(1.4) + two / count::<T>(n + 1)) * chi;
    let h_sigma = if stalled { T::zero() } else { one };

    let c_c = config.c_cov;
    let covariance_path =
        &state.covariance_path * (one - c_c) + &displacement * (h_sigma * (c_c * (two - c_c) * mu_p).sqrt());
    let delta = (one - h_sigma) * c_c * (two - c_c);

    let rank_one = &covariance_path * covariance_path.transpose() + &cov * delta;
    let rank_mu = scatter / (sigma * sigma);
    let covariance = &cov * (one - config.c_1 - config.c_mu) + rank_one * config.c_1 + rank_mu * config.c_mu;

    Ok((
        CmaesState {
            sigma_path,
            covariance_path,
            step_size: new_sigma,
            generation: state.generation + 1,
        },
        GaussianSearchDistribution {
            mean: new_mean,
            covariance,
            step_size: new_sigma,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm<T: Real> {
    Cem {
        elite_count: usize,
    },
    /// `config: None` uses [`CmaesConfig::defaults`].
    Cmaes {
        elite_count: usize,
        config: Option<CmaesConfig<T>>,
    },
}

/// Diagnostics for one iteration of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub iteration: usize,
    pub best_cost: T,
    pub mean_cost: T,
    pub step_size: T,
    /// Mean eigenvalue of the covariance sampled from in this iteration.
    pub exploration_magnitude: T,
}

#[derive(Debug, Clone)]
pub struct Minimized<T: Real> {
    pub curve: Vec<IterationRecord<T>>,
    pub distribution: GaussianSearchDistribution<T>,
    pub best: DVector<T>,
    pub best_cost: T,
}

/// Sample / sort / update loop.
///
/// Sample `k` of iteration `t` is drawn from [`rng::stream`]`(seed, t, k)`.
pub fn minimize<T, F>(
    mut cost_fn: F,
    algorithm: &Algorithm<T>,
    initial: GaussianSearchDistribution<T>,
    iterations: usize,
    samples_per_iter: usize,
    seed: u64,
) -> Result<Minimized<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> T,
{
    if samples_per_iter < 2 {
        return Err(Error::arg("at least two samples per iteration are required"));
    }
    if iterations == 0 {
        return Err(Error::arg("at least one iteration is required"));
    }
    initial.validate()?;
    let n = initial.dim();

    let (elite_count, cmaes) = match algorithm {
        Algorithm::Cem { elite_count } => (*elite_count, None),
        Algorithm::Cmaes { elite_count, config } => {
            let w = cmaes_weights::<T>(samples_per_iter, *elite_count)?;
            let config = config.unwrap_or_else(|| CmaesConfig::defaults(n, effective_selection_mass(&w)));
            config.validate()?;
            (*elite_count, Some((config, w)))
        }
    };
    if elite_count == 0 || elite_count > samples_per_iter {
        return Err(Error::arg(format!(
            "elite count {elite_count} outside 1..={samples_per_iter}"
        )));
    }

    let mut dist = initial;
    let mut state = CmaesState::new(n, dist.step_size);
    let mut curve = Vec::with_capacity(iterations);
    let mut best = dist.mean.clone();
    let mut best_cost: Option<T> = None;

    for iteration in 0..iterations {
        let sampler = dist.sampler()?;
        let mut samples = Vec::with_capacity(samples_per_iter);
        let mut costs = Vec::with_capacity(samples_per_iter);
        for k in 0..samples_per_iter {
            let x = sampler.draw(&mut rng::stream(seed, iteration, k));
            let c = cost_fn(&x);
            if !c.is_finite() {
                return Err(Error::NonFiniteCost {
                    iteration,
                    sample: k,
                    value: c.to_f64().unwrap_or(f64::NAN),
                });
            }
            samples.push(x);
            costs.push(c);
        }

        let order = rank_order(&costs);
        let sorted: Vec<DVector<T>> = order.iter().map(|&i| samples[i].clone()).collect();
        let sorted_costs: Vec<T> = order.iter().map(|&i| costs[i]).collect();

        let total = costs.iter().fold(T::zero(), |a, &c| a + c);
        curve.push(IterationRecord {
            iteration,
            best_cost: sorted_costs[0],
            mean_cost: total / count::<T>(samples_per_iter),
            step_size: dist.step_size,
            exploration_magnitude: linalg::trace(&dist.effective_covariance()) / count::<T>(n),
        });
        if best_cost.is_none_or(|b| sorted_costs[0] < b) {
            best_cost = Some(sorted_costs[0]);
            best = sorted[0].clone();
        }

        dist = match &cmaes {
            None => cem_update(&dist, &sorted, &cem_weights(&sorted_costs, elite_count)?)?,
            Some((config, weights)) => {
                let (next_state, next) = cmaes_update(&state, config, &dist, &sorted, weights)?;
                state = next_state;
                next
            }
        };
    }

    Ok(Minimized {
        curve,
        distribution: dist,
        best,
        best_cost: best_cost.expect("at least one iteration ran"),
    })
}
