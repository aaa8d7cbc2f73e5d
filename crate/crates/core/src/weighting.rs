//! Eliteness mappings and Gaussian sampling.
//!
//! The three optimizers in this crate differ mainly in how they turn sample
//! costs into probabilities: a hard cutoff (CEM), log-rank weights over the
//! elite set (CMA-ES) and exponentiated, range-normalized costs (PI²). All of
//! them produce a [`ProbabilityWeights`] vector that then drives the same
//! weighted-average update of a [`GaussianSearchDistribution`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, max_asymmetry, min_eigenvalue, PSD_TOL, SYMMETRY_TOL};
use crate::scalar::{cast, count, unit_tolerance, Real};

/// Multivariate Gaussian `N(mean, step_size² · covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSearchDistribution<T: Real> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
    pub step_size: T,
}

impl<T: Real> GaussianSearchDistribution<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        Self::with_step_size(mean, covariance, T::one())
    }

    pub fn with_step_size(mean: DVector<T>, covariance: DMatrix<T>, step_size: T) -> Result<Self> {
        let dist = Self {
            mean,
            covariance,
            step_size,
        };
        dist.validate()?;
        Ok(dist)
    }

    /// `N(mean, variance · I)`.
    pub fn isotropic(mean: DVector<T>, variance: T) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, DMatrix::identity(n, n) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Covariance actually sampled from, `step_size² · covariance`.
    pub fn effective_covariance(&self) -> DMatrix<T> {
        &self.covariance * (self.step_size * self.step_size)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.covariance.shape() != (n, n) {
            return Err(Error::arg(format!(
                "covariance is {:?}, expected {n}x{n}",
                self.covariance.shape()
            )));
        }
        if !(self.step_size > T::zero()) || !self.step_size.is_finite() {
            return Err(Error::arg(format!("step size must be positive, got {}", self.step_size)));
        }
        if max_asymmetry(&self.covariance) > cast(SYMMETRY_TOL) {
            return Err(Error::arg("covariance is not symmetric"));
        }
        let low = min_eigenvalue(&self.covariance);
        if low < -cast::<T>(PSD_TOL) {
            return Err(Error::arg(format!(
                "covariance is not positive semi-definite (eigenvalue {low})"
            )));
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<GaussianSampler<T>> {
        let root = linalg::sqrt_psd(&self.covariance)?;
        Ok(GaussianSampler {
            mean: self.mean.clone(),
            factor: root * self.step_size,
        })
    }
}

/// A distribution with its covariance already factored, for repeated draws.
#[derive(Debug, Clone)]
pub struct GaussianSampler<T: Real> {
    mean: DVector<T>,
    factor: DMatrix<T>,
}

impl<T: Real> GaussianSampler<T> {
    /// Zero-mean draw `L z`.
    pub fn draw_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        let n = self.mean.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| cast::<T>(rng.sample::<f64, _>(StandardNormal))));
        &self.factor * z
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        &self.mean + self.draw_offset(rng)
    }
}

/// Draws `count` vectors from `N(mean, step_size² · covariance)`.
pub fn sample<T: Real, R: Rng + ?Sized>(
    dist: &GaussianSearchDistribution<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<T>>> {
    let sampler = dist.sampler()?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityWeights<T: Real>(Vec<T>);

impl<T: Real> ProbabilityWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::arg("weights must not be empty"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::arg(format!("weight {w} is negative or not finite")));
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        if (total - T::one()).abs() > unit_tolerance::<T>(weights.len()) {
            return Err(Error::arg(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Normalizes non-negative raw weights.
    pub fn normalized(raw: Vec<T>) -> Result<Self> {
        let total = raw.iter().fold(T::zero(), |a, &w| a + w);
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::arg(format!("raw weights sum to {total}")));
        }
        Self::new(raw.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("weights must not be empty"));
        }
        Ok(Self(vec![T::one() / count::<T>(k); k]))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T: Real> std::ops::Index<usize> for ProbabilityWeights<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// Indices of `costs` in ascending cost order; ties keep their original order.
pub fn rank_order<T: Real>(costs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    idx.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// CEM cutoff: the `elite_count` cheapest samples get `1/elite_count`, the
/// rest get zero. Weights are indexed like `costs`.
pub fn cem_weights<T: Real>(costs: &[T], elite_count: usize) -> Result<ProbabilityWeights<T>> {
    let k = costs.len();
    if elite_count == 0 || elite_count > k {
        return Err(Error::arg(format!("elite count {elite_count} outside 1..={k}")));
    }
    if costs.iter().any(|c| c.partial_cmp(c).is_none()) {
        return Err(Error::arg("costs must not be NaN"));
    }
    let mut w = vec![T::zero(); k];
    let share = T::one() / count::<T>(elite_count);
    for &i in rank_order(costs).iter().take(elite_count) {
        w[i] = share;
    }
    Ok(ProbabilityWeights(w))
}

/// CMA-ES log-rank weights `ln(0.5(K+1)) - ln(k)` for ranks `k = 1..=elite_count`,
/// zero beyond, normalized over the elite set. Indexed by rank.
pub fn cmaes_weights<T: Real>(k: usize, elite_count: usize) -> Result<ProbabilityWeights<T>> {
    if elite_count == 0 || elite_count > k {
        return Err(Error::arg(format!("elite count {elite_count} outside 1..={k}")));
    }
    let base = (cast::<T>(0.5) * count::<T>(k + 1)).ln();
    let last = base - count::<T>(elite_count).ln();
    if !(last > T::zero()) {
        return Err(Error::arg(format!(
            "log-rank weight of rank {elite_count} is not positive for K = {k}"
        )));
    }
    let raw = (1..=k)
        .map(|rank| {
            if rank <= elite_count {
                base - count::<T>(rank).ln()
            } else {
                T::zero()
            }
        })
        .collect();
    ProbabilityWeights::normalized(raw)
}

/// PI² weights `exp(-h (S - min S) / (max S - min S))`, normalized.
///
/// When every cost is equal the weights are uniform.
pub fn pi2_weights<T: Real>(costs: &[T], eliteness_h: T) -> Result<ProbabilityWeights<T>> {
    if costs.is_empty() {
        return Err(Error::arg("costs must not be empty"));
    }
    if !(eliteness_h > T::zero()) || !eliteness_h.is_finite() {
        return Err(Error::arg(format!("eliteness h must be positive, got {eliteness_h}")));
    }
    if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::arg(format!("cost {c} is not finite")));
    }
    let lo = costs.iter().copied().fold(costs[0], |a, b| if b < a { b } else { a });
    let hi = costs.iter().copied().fold(costs[0], |a, b| if b > a { b } else { a });
    let range = hi - lo;
    if !(range > T::zero()) {
        return ProbabilityWeights::uniform(costs.len());
    }
    let raw = costs
        .iter()
        .map(|&c| (-eliteness_h * (c - lo) / range).exp())
        .collect();
    ProbabilityWeights::normalized(raw)
}

/// Variance effective selection mass `1 / Σ P_k²`.
pub fn effective_selection_mass<T: Real>(weights: &ProbabilityWeights<T>) -> T {
    let sq = weights.as_slice().iter().fold(T::zero(), |a, &w| a + w * w);
    T::one() / sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn zero_covariance_samples_equal_mean() {
        let d = GaussianSearchDistribution::new(v(&[1.5, -2.0]), DMatrix::zeros(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in sample(&d, 20, &mut rng).unwrap() {
            assert_eq!(s, d.mean);
        }
    }

    #[test]
    fn law_of_large_numbers() {
        let d = GaussianSearchDistribution::new(v(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs = sample(&d, n, &mut rng).unwrap();
        let mean = xs.iter().fold(DVector::zeros(2), |a, x| a + x) / n as f64;
        let mut cov = DMatrix::zeros(2, 2);
        for x in &xs {
            let c = x - &mean;
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        assert!(mean.abs().max() < 0.02, "{mean}");
        assert!((cov - DMatrix::identity(2, 2)).abs().max() < 0.05);
    }

    #[test]
    fn step_size_is_equivalent_to_scaled_covariance() {
        let a = GaussianSearchDistribution::with_step_size(v(&[1.0, 2.0]), DMatrix::identity(2, 2), 2.0)
            .unwrap();
        let b = GaussianSearchDistribution::new(v(&[1.0, 2.0]), DMatrix::identity(2, 2) * 4.0).unwrap();
        let sa = sample(&a, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let sb = sample(&b, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn indefinite_covariance_fails_to_sample() {
        let d = GaussianSearchDistribution {
            mean: v(&[0.0, 0.0]),
            covariance: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            step_size: 1.0,
        };
        let err = sample(&d, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Decomposition(_)));
        assert!(d.validate().is_err());
    }

    #[test]
    fn distribution_invariants_are_checked() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianSearchDistribution::new(v(&[0.0, 0.0]), asym).is_err());
        assert!(GaussianSearchDistribution::with_step_size(v(&[0.0]), DMatrix::identity(1, 1), 0.0).is_err());
        assert!(GaussianSearchDistribution::new(v(&[0.0]), DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn cem_weight_examples() {
        assert_eq!(cem_weights(&[3.0, 1.0, 2.0], 1).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(cem_weights(&[1.0, 2.0, 3.0, 4.0], 2).unwrap().as_slice(), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(cem_weights(&[4.0, 3.0, 2.0, 1.0], 4).unwrap().as_slice(), &[0.25; 4]);
    }

    #[test]
    fn cem_ties_break_by_index() {
        let w = cem_weights(&[1.0, 0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn cem_rejects_bad_elite_count() {
        assert!(cem_weights(&[1.0, 2.0], 0).is_err());
        assert!(cem_weights(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn cmaes_weight_examples() {
        let w = cmaes_weights::<f64>(10, 5).unwrap();
        let expected = [
            0.456_272_646_903_405_97,
            0.270_753_097_001_785_2,
            0.162_231_117_158_669_78,
            0.085_233_547_100_164_48,
            0.025_509_591_835_974_777,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(cmaes_weights::<f64>(3, 1).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn cmaes_rejects_nonpositive_last_weight() {
        // ln(2) - ln(2) == 0
        assert!(cmaes_weights::<f64>(3, 2).is_err());
        assert!(cmaes_weights::<f64>(10, 6).is_err());
        assert!(cmaes_weights::<f64>(10, 0).is_err());
    }

    #[test]
    fn pi2_weight_examples() {
        let w = pi2_weights(&[0.0, 1.0], 10.0).unwrap();
        assert_relative_eq!(w[0], 0.999_954_602_131_297_6, epsilon = 1e-12);
        assert_relative_eq!(w[1], 4.539_786_870_243_439_5e-5, epsilon = 1e-15);
        let w = pi2_weights(&[0.0, 0.5, 1.0], 10.0).unwrap();
        assert_relative_eq!(w[0], 0.993_262_356_842_174_5, epsilon = 1e-12);
        let w = pi2_weights(&[2.0; 4], 10.0).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn pi2_rejects_non_finite_cost() {
        assert!(pi2_weights(&[0.0, f64::INFINITY], 10.0).is_err());
        assert!(pi2_weights(&[0.0, f64::NAN], 10.0).is_err());
        assert!(pi2_weights(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn selection_mass_examples() {
        let w = cem_weights(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 5).unwrap();
        assert_relative_eq!(effective_selection_mass(&w), 5.0, epsilon = 1e-12);
        let w = ProbabilityWeights::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(effective_selection_mass(&w), 1.0);
        let w = cmaes_weights::<f64>(10, 5).unwrap();
        assert_relative_eq!(effective_selection_mass(&w), 3.167_299_281_410_701_7, epsilon = 1e-10);
    }

    #[test]
    fn single_precision_weights() {
        let w = cmaes_weights::<f32>(10, 5).unwrap();
        assert!((w[0] - 0.456_272_65).abs() < 1e-6);
        let w = pi2_weights(&[0.0f32, 1.0], 10.0).unwrap();
        assert!((w[0] - 0.999_954_6).abs() < 1e-6);
    }
}
