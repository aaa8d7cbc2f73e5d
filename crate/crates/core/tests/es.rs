// Brute-force oracles index loop by loop on purpose.
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use pwa::es::{cem_update, cmaes_update, minimize, weighted_scatter};
use pwa::weighting::{cem_weights, cmaes_weights, sample};
use pwa::{Algorithm, CmaesConfig, CmaesState, GaussianSearchDistribution, ProbabilityWeights};
use proptest::prelude::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Principal square root of a 2x2 SPD matrix in closed form.
fn sqrt2(a: Matrix2<f64>) -> Matrix2<f64> {
    let s = a.determinant().sqrt();
    let t = (a.trace() + 2.0 * s).sqrt();
    (a + Matrix2::identity() * s) / t
}

#[test]
fn two_dimensional_update_matches_hand_evaluation() {
    let mean = Vector2::new(0.3, -0.2);
    let cov = Matrix2::new(2.0, 0.6, 0.6, 1.0);
    let sigma = 0.8;
    let p_s = Vector2::new(0.1, -0.3);
    let p_c = Vector2::new(-0.2, 0.05);
    let generation: usize = 2;
    let samples = [
        Vector2::new(0.9, -0.1),
        Vector2::new(0.2, 0.4),
        Vector2::new(-0.5, -0.6),
        Vector2::new(1.4, 0.3),
        Vector2::new(-1.0, 0.8),
        Vector2::new(0.0, -1.3),
    ];
    let raw: Vec<f64> = (1..=3).map(|k| 3.5f64.ln() - (k as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|r| r / total).chain([0.0; 3]).collect();
    let mu = 1.0 / p.iter().map(|x| x * x).sum::<f64>();

    let n = 2.0;
    let c_s = (mu + 2.0) / (n + mu + 5.0);
    let d_s = 1.0 + 2.0 * (((mu - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_s;
    let c_c = (4.0 + mu / n) / (n + 4.0 + 2.0 * mu / n);
    let c_1 = 2.0 / ((n + 1.3f64).powi(2) + mu);
    let c_mu = (2.0 * (mu - 2.0 + 1.0 / mu) / ((n + 2.0f64).powi(2) + mu)).min(1.0 - c_1);

    let new_mean: Vector2<f64> = samples.iter().zip(&p).map(|(s, w)| s * *w).sum();
    let disp = (new_mean - mean) / sigma;
    let inv_sqrt = sqrt2(cov).try_inverse().unwrap();
    let ps = p_s * (1.0 - c_s) + inv_sqrt * disp * (c_s * (2.0 - c_s) * mu).sqrt();
    let chi = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    let new_sigma = sigma * (c_s / d_s * (ps.norm() / chi - 1.0)).exp();
    let h = if ps.norm() / (1.0 - (1.0 - c_s).powi(2 * (generation as i32 + 1))).sqrt() < (1.4 + 2.0 / (n + 1.0)) * chi {
        1.0
    } else {
        0.0
    };
    let pc = p_c * (1.0 - c_c) + disp * h * (c_c * (2.0 - c_c) * mu).sqrt();
    let delta = (1.0 - h) * c_c * (2.0 - c_c);
    let rank_mu: Matrix2<f64> = samples
        .iter()
        .zip(&p)
        .map(|(s, w)| (s - mean) * (s - mean).transpose() * *w)
        .sum::<Matrix2<f64>>()
        / (sigma * sigma);
    let new_cov = cov * (1.0 - c_1 - c_mu) + (pc * pc.transpose() + cov * delta) * c_1 + rank_mu * c_mu;

    let dist = GaussianSearchDistribution::with_step_size(
        v(mean.as_slice()),
        DMatrix::from_column_slice(2, 2, cov.as_slice()),
        sigma,
    )
    .unwrap();
    let state = CmaesState {
        sigma_path: v(p_s.as_slice()),
        covariance_path: v(p_c.as_slice()),
        step_size: sigma,
        generation,
    };
    let weights = cmaes_weights::<f64>(6, 3).unwrap();
    let config = CmaesConfig::defaults(2, mu);
    let xs: Vec<DVector<f64>> = samples.iter().map(|s| v(s.as_slice())).collect();
    let (st, out) = cmaes_update(&state, &config, &dist, &xs, &weights).unwrap();

    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-10);
    assert!(close(out.mean.as_slice(), new_mean.as_slice()));
    assert!(close(st.sigma_path.as_slice(), ps.as_slice()));
    assert!(close(st.covariance_path.as_slice(), pc.as_slice()));
    assert!((out.step_size - new_sigma).abs() < 1e-10);
    assert!(close(out.covariance.as_slice(), new_cov.as_slice()));
    assert_eq!(st.generation, 3);
}

#[test]
fn cem_matches_brute_force_sums() {
    let dist = GaussianSearchDistribution::new(v(&[1.0, -2.0, 0.5]), DMatrix::from_diagonal(&v(&[4.0, 1.0, 9.0]))).unwrap();
    let mut rng = pwa::rng::stream(3, 0, 0);
    let xs = sample(&dist, 10, &mut rng).unwrap();
    let costs: Vec<f64> = xs.iter().map(|x| x.norm_squared()).collect();
    let w = cem_weights(&costs, 5).unwrap();
    let out = cem_update(&dist, &xs, &w).unwrap();

    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    let mut m = [0.0; 3];
    let mut c = [[0.0; 3]; 3];
    for &k in &order[..5] {
        for i in 0..3 {
            m[i] += xs[k][i] / 5.0;
            for j in 0..3 {
                c[i][j] += (xs[k][i] - dist.mean[i]) * (xs[k][j] - dist.mean[j]) / 5.0;
            }
        }
    }
    for i in 0..3 {
        assert!((out.mean[i] - m[i]).abs() < 1e-12);
        for j in 0..3 {
            assert!((out.covariance[(i, j)] - c[i][j]).abs() < 1e-12);
        }
    }
    assert_eq!(out.step_size, dist.step_size);
}

/// CEM with half the samples elite shrinks its covariance faster than it
/// travels, so single runs can stall; the median run still ends an order of
/// magnitude below the start.
#[test]
fn cem_descends_the_sphere() {
    let mut best: Vec<f64> = (0..20)
        .map(|seed| {
            let start = GaussianSearchDistribution::isotropic(v(&[8.0, 8.0]), 9.0).unwrap();
            let out = minimize(|x| x.norm_squared(), &Algorithm::Cem { elite_count: 5 }, start, 50, 10, seed).unwrap();
            assert_eq!(out.curve.len(), 50);
            out.best_cost
        })
        .collect();
    best.sort_by(f64::total_cmp);
    assert!(best[10] < 12.8, "median best cost {}", best[10]);
}

#[test]
fn cmaes_finds_the_sphere_minimum() {
    for seed in 0..5 {
        let start = GaussianSearchDistribution::isotropic(v(&[8.0, 8.0]), 9.0).unwrap();
        let alg = Algorithm::Cmaes { elite_count: 5, config: None };
        let out = minimize(|x| x.norm_squared(), &alg, start, 50, 10, seed).unwrap();
        assert!(out.best_cost < 1e-6, "seed {seed}: best cost {}", out.best_cost);
    }
}

#[test]
fn same_seed_same_curve() {
    let start = GaussianSearchDistribution::isotropic(v(&[3.0, -1.0]), 2.0).unwrap();
    let alg = Algorithm::Cmaes { elite_count: 3, config: None };
    let a = minimize(|x| x.norm_squared(), &alg, start.clone(), 20, 8, 11).unwrap();
    let b = minimize(|x| x.norm_squared(), &alg, start.clone(), 20, 8, 11).unwrap();
    let c = minimize(|x| x.norm_squared(), &alg, start, 20, 8, 12).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.distribution, b.distribution);
    assert_ne!(a.curve, c.curve);
}

#[test]
fn cem_ignores_monotone_cost_warping() {
    let start = GaussianSearchDistribution::isotropic(v(&[2.0, 5.0]), 4.0).unwrap();
    let alg = Algorithm::Cem { elite_count: 4 };
    let a = minimize(|x| x.norm_squared(), &alg, start.clone(), 15, 10, 5).unwrap();
    let b = minimize(|x| (x.norm_squared()).sqrt() * 7.0 - 3.0, &alg, start, 15, 10, 5).unwrap();
    assert_eq!(a.distribution, b.distribution);
}

#[test]
fn constant_cost_keeps_the_mean_near_its_start() {
    let start = GaussianSearchDistribution::isotropic(v(&[1.0, 1.0]), 1.0).unwrap();
    let out = minimize(|_| 4.0, &Algorithm::Cem { elite_count: 100 }, start, 3, 100, 9).unwrap();
    assert!((out.distribution.mean - v(&[1.0, 1.0])).norm() < 0.5);
    let c = &out.distribution.covariance;
    assert!(c[(0, 0)] > 0.2 && c[(1, 1)] > 0.2 && c[(0, 1)].abs() < 0.5);
}

fn instance() -> impl Strategy<Value = (usize, usize, u64)> {
    (prop::sample::select(vec![2usize, 5, 10]), prop::sample::select(vec![6usize, 10, 20]), any::<u64>())
}

fn random_problem(n: usize, k: usize, seed: u64) -> (GaussianSearchDistribution<f64>, Vec<DVector<f64>>) {
    let mut rng = pwa::rng::stream(seed, 0, 0);
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3 + seed as usize % 11) % 5) as f64 * 0.3);
    let cov = &a * a.transpose() + DMatrix::identity(n, n);
    let dist = GaussianSearchDistribution::new(DVector::from_fn(n, |i, _| i as f64 - 1.0), cov).unwrap();
    let xs = sample(&dist, k, &mut rng).unwrap();
    (dist, xs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn extreme_rates_reduce_cmaes_to_cem((n, k, seed) in instance()) {
        let (dist, xs) = random_problem(n, k, seed);
        let w = cmaes_weights::<f64>(k, k / 2).unwrap();
        let cfg = CmaesConfig::defaults(n, 3.0).reduced_to_cem();
        let (state, a) = cmaes_update(&CmaesState::new(n, 1.0), &cfg, &dist, &xs, &w).unwrap();
        let b = cem_update(&dist, &xs, &w).unwrap();
        prop_assert_eq!(state.step_size, 1.0);
        prop_assert!((&a.mean - &b.mean).amax() < 1e-10);
        prop_assert!((&a.covariance - &b.covariance).amax() < 1e-10);
    }

    #[test]
    fn updated_covariances_stay_symmetric_psd((n, k, seed) in instance()) {
        let (dist, xs) = random_problem(n, k, seed);
        let w = cmaes_weights::<f64>(k, k / 2).unwrap();
        let cfg = CmaesConfig::defaults(n, pwa::weighting::effective_selection_mass(&w));
        let (_, a) = cmaes_update(&CmaesState::new(n, 1.0), &cfg, &dist, &xs, &w).unwrap();
        let b = cem_update(&dist, &xs, &ProbabilityWeights::uniform(k).unwrap()).unwrap();
        for c in [a.covariance, b.covariance] {
            prop_assert!((&c - c.transpose()).amax() <= 1e-9);
            prop_assert!(c.symmetric_eigenvalues().min() >= -1e-9);
        }
    }

    #[test]
    fn scatter_about_center_is_psd((n, k, seed) in instance()) {
        let (dist, xs) = random_problem(n, k, seed);
        let s = weighted_scatter(&xs, &ProbabilityWeights::uniform(k).unwrap(), &dist.mean);
        prop_assert!(s.symmetric_eigenvalues().min() >= -1e-9 * s.amax().max(1.0));
    }
}
