use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use pwa::arm::{final_posture, viapoint_cost};
use pwa::dmp::{integrate, min_jerk, train_from_trajectory};
use pwa::es::{cem_update, cmaes_update, weighted_mean};
use pwa::pi2::{exploration_magnitude, generate_exploration, pi2_update};
use pwa::weighting::{cem_weights, cmaes_weights, effective_selection_mass, rank_order};
use pwa::{
    rng, ArmModel, CmaesConfig, CmaesState, DmpPolicy, ExplorationMode, GaussianSearchDistribution, Pi2Config,
    RolloutBatch, ViapointTask,
};

use crate::config::{AlgorithmKind, CovarianceKind, ExperimentConfig};
use crate::curve::{CurveRow, LearningCurve};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("non-finite cost {value} in {} of update {update}", rollout_name(*.rollout))]
    NonFiniteCost {
        update: usize,
        /// `None` for the noise-free rollout.
        rollout: Option<usize>,
        value: f64,
    },
    #[error(transparent)]
    Core(#[from] pwa::Error),
}

fn rollout_name(rollout: Option<usize>) -> String {
    match rollout {
        Some(k) => format!("rollout {k}"),
        None => "the noise-free rollout".into(),
    }
}

/// A replication that stopped early. `partial` holds the rows completed
/// before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub seed: u64,
    pub partial: LearningCurve,
    pub error: RunError,
}

/// Outcome of one completed replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub curve: LearningCurve,
    /// Search distribution of each DOF after the last update.
    pub distributions: Vec<GaussianSearchDistribution<f64>>,
}

impl Session {
    /// Mean parameters after learning, one row per DOF.
    pub fn theta(&self) -> DMatrix<f64> {
        let b = self.distributions.first().map_or(0, |d| d.dim());
        DMatrix::from_fn(self.distributions.len(), b, |d, q| self.distributions[d].mean[q])
    }
}

/// Task, initial policy and per-step basis activations shared by all
/// replications of one config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub arm: ArmModel<f64>,
    pub task: ViapointTask<f64>,
    /// Minimum-jerk-trained policy every replication starts from.
    pub policy: DmpPolicy<f64>,
    activations: DMatrix<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, RunError> {
        let d = config.dofs;
        let b = config.basis_functions;
        let arm = ArmModel::uniform(d, config.arm_length)?;
        let task = ViapointTask::new(
            d,
            (config.viapoint_x, config.viapoint_y),
            config.viapoint_time,
            config.duration,
        )?
        .with_viapoint_weight(config.viapoint_weight)?;
        let start = DVector::zeros(d);
        let goal = final_posture(&arm)?;
        let template = match (config.alpha_z, config.beta_z, config.alpha_x) {
            (None, None, None) => DmpPolicy::new(start.clone(), goal.clone(), config.duration, b)?,
            (az, bz, ax) => DmpPolicy::with_constants(
                start.clone(),
                goal.clone(),
                config.duration,
                b,
                az.unwrap_or(pwa::dmp::DEFAULT_ALPHA_Z),
                bz.unwrap_or(pwa::dmp::DEFAULT_BETA_Z),
                ax.unwrap_or(pwa::dmp::DEFAULT_ALPHA_X),
            )?,
        };
        let demo = min_jerk(&start, &goal, config.duration, config.dt)?;
        let policy = train_from_trajectory(&demo, &template)?;
        let activations = policy.activation_table(config.dt);
        Ok(Self {
            config,
            arm,
            task,
            policy,
            activations,
        })
    }

    /// Per-step costs of one rollout of `theta` plus optional offsets.
    pub fn rollout(&self, theta: &DMatrix<f64>, offsets: Option<&[DMatrix<f64>]>) -> Result<DVector<f64>, RunError> {
        let mut policy = self.policy.clone();
        policy.theta.copy_from(theta);
        let traj = integrate(&policy, self.config.dt, offsets)?;
        Ok(viapoint_cost(&self.task, &self.arm, &traj)?)
    }

    /// Total noise-free cost of the initial policy.
    pub fn initial_cost(&self) -> Result<f64, RunError> {
        Ok(self.rollout(&self.policy.theta, None)?.sum())
    }

    pub fn replication_seed(&self, replication: usize) -> u64 {
        self.config.seed.wrapping_add(replication as u64)
    }

    /// One learning session: `updates + 1` rows, the first for the initial
    /// policy. λ in each row describes the distribution the row's batch was
    /// drawn from.
    pub fn replicate(&self, replication: usize) -> Result<LearningCurve, ReplicationFailure> {
        self.session(replication).map(|s| s.curve)
    }

    /// Like [`Experiment::replicate`], also returning the final distributions.
    pub fn session(&self, replication: usize) -> Result<Session, ReplicationFailure> {
        let seed = self.replication_seed(replication);
        let mut curve = LearningCurve::default();
        match self.learn(seed, &mut curve) {
            Ok(distributions) => Ok(Session { curve, distributions }),
            Err(error) => Err(ReplicationFailure {
                replication,
                seed,
                partial: curve,
                error,
            }),
        }
    }

    fn learn(&self, seed: u64, curve: &mut LearningCurve) -> Result<Vec<GaussianSearchDistribution<f64>>, RunError> {
        let c = &self.config;
        let (dofs, basis, trials) = (c.dofs, c.basis_functions, c.trials_per_update);
        let mut dists = (0..dofs)
            .map(|d| GaussianSearchDistribution::isotropic(self.policy.theta.row(d).transpose(), c.lambda_init))
            .collect::<Result<Vec<_>, _>>()?;
        let mut states: Vec<CmaesState<f64>> = (0..dofs).map(|_| CmaesState::new(basis, 1.0)).collect();
        let mode: ExplorationMode = c.exploration_mode.into();
        let pi2_config = c.algorithm.is_pi2().then(|| Pi2Config {
            eliteness_h: c.eliteness_h.expect("validated"),
            trials_per_update: trials,
            exploration_mode: mode,
            covariance_update: c.covariance().into(),
            base_noise_level: c.base_noise_level,
            evaluation_rollout: true,
            cmaes: None,
        });

        for update in 0..=c.updates {
            let theta = DMatrix::from_fn(dofs, basis, |d, q| dists[d].mean[q]);
            let noise_free = self.rollout(&theta, None)?.sum();
            if !noise_free.is_finite() {
                return Err(RunError::NonFiniteCost {
                    update,
                    rollout: None,
                    value: noise_free,
                });
            }

            let mut offsets = Vec::with_capacity(trials);
            let mut step_costs = DMatrix::zeros(trials, self.activations.nrows());
            for k in 0..trials {
                let mut rng = rng::stream(seed, update, k);
                let per_dof = dists
                    .iter()
                    .map(|dist| generate_exploration(mode, dist, &self.activations, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?;
                let costs = self.rollout(&theta, Some(&per_dof))?;
                let total = costs.sum();
                if !total.is_finite() {
                    return Err(RunError::NonFiniteCost {
                        update,
                        rollout: Some(k),
                        value: total,
                    });
                }
                step_costs.row_mut(k).copy_from(&costs.transpose());
                offsets.push(per_dof);
            }
            let batch = RolloutBatch {
                offsets,
                trajectories: Vec::new(),
                step_costs,
                exploration_mode: mode,
                evaluation_cost: Some(noise_free),
            };

            let lambdas = dists
                .iter()
                .map(|d| exploration_magnitude(&d.effective_covariance()))
                .collect::<Result<Vec<_>, _>>()?;
            let totals = batch.total_costs();
            curve.rows.push(CurveRow {
                update,
                noise_free_cost: noise_free,
                mean_batch_cost: totals.iter().sum::<f64>() / trials as f64,
                lambda_mean: lambdas.iter().sum::<f64>() / dofs as f64,
                lambda_dofs: lambdas,
            });
            if update == c.updates {
                break;
            }

            match &pi2_config {
                Some(cfg) => {
                    let cmaes = (c.covariance() == CovarianceKind::Cmaes).then_some(states.as_slice());
                    let report = pi2_update(&batch, cfg, &dists, cmaes)?;
                    dists = report.distributions;
                    if cmaes.is_some() {
                        states = report.cmaes_states;
                    }
                }
                None => self.episodic_update(&batch, &totals, &mut dists, &mut states)?,
            }
        }
        Ok(dists)
    }

    /// CEM or CMA-ES update of each DOF from the constant offsets and total
    /// costs of the batch.
    fn episodic_update(
        &self,
        batch: &RolloutBatch<f64>,
        totals: &[f64],
        dists: &mut [GaussianSearchDistribution<f64>],
        states: &mut [CmaesState<f64>],
    ) -> Result<(), RunError> {
        let c = &self.config;
        let elite = c.elite_count.expect("validated");
        let order = rank_order(totals);
        let sorted_costs: Vec<f64> = order.iter().map(|&k| totals[k]).collect();
        let weights = match c.algorithm {
            AlgorithmKind::Cem => cem_weights(&sorted_costs, elite)?,
            _ => cmaes_weights(c.trials_per_update, elite)?,
        };
        let cmaes_config = CmaesConfig::defaults(c.basis_functions, effective_selection_mass(&weights));

        for (d, dist) in dists.iter_mut().enumerate() {
            let samples: Vec<DVector<f64>> = order
                .iter()
                .map(|&k| &dist.mean + batch.offsets[k][d].row(0).transpose())
                .collect();
            let mut next = match c.covariance() {
                CovarianceKind::None => GaussianSearchDistribution {
                    mean: weighted_mean(&samples, &weights),
                    ..dist.clone()
                },
                CovarianceKind::Cem => cem_update(dist, &samples, &weights)?,
                CovarianceKind::Cmaes => {
                    let (state, next) = cmaes_update(&states[d], &cmaes_config, dist, &samples, &weights)?;
                    states[d] = state;
                    next
                }
            };
            for q in 0..c.basis_functions {
                next.covariance[(q, q)] += c.base_noise_level;
            }
            *dist = next;
        }
        Ok(())
    }
}

/// Runs every replication of `config` in parallel, keeping the final
/// distributions.
pub fn run_sessions(config: &ExperimentConfig) -> Result<Vec<Result<Session, ReplicationFailure>>, RunError> {
    let experiment = Experiment::new(config.clone())?;
    Ok((0..config.replications)
        .into_par_iter()
        .map(|r| experiment.session(r))
        .collect())
}

/// Runs every replication of `config`, in parallel. Replication `r` uses
/// seed `config.seed + r`; results are in replication order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<Result<LearningCurve, ReplicationFailure>>, RunError> {
    let experiment = Experiment::new(config.clone())?;
    Ok((0..config.replications)
        .into_par_iter()
        .map(|r| experiment.replicate(r))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: AlgorithmKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::viapoint("t", algorithm);
        c.updates = 3;
        c
    }

    #[test]
    fn zero_updates_gives_initial_row_only() {
        let mut c = small(AlgorithmKind::Pi2);
        c.updates = 0;
        let curve = run(&c).unwrap().remove(0).unwrap();
        assert_eq!(curve.rows.len(), 1);
        assert!(curve.rows[0].noise_free_cost > 0.0);
        assert_eq!(curve.rows[0].lambda_mean, 1e4);
    }

    #[test]
    fn every_algorithm_runs() {
        for a in [
            AlgorithmKind::Cem,
            AlgorithmKind::Cmaes,
            AlgorithmKind::Pi2,
            AlgorithmKind::Pi2Cma,
            AlgorithmKind::Pi2Cmaes,
        ] {
            let curve = run(&small(a)).unwrap().remove(0).unwrap();
            assert_eq!(curve.rows.len(), 4, "{a:?}");
            assert!(curve.rows.iter().all(|r| r.noise_free_cost.is_finite()), "{a:?}");
        }
    }

    #[test]
    fn fixed_covariance_keeps_lambda() {
        let curve = run(&small(AlgorithmKind::Pi2)).unwrap().remove(0).unwrap();
        assert!(curve.rows.iter().all(|r| r.lambda_dofs.iter().all(|&l| l == 1e4)));
    }

    #[test]
    fn diverging_run_reports_partial_curve() {
        let mut c = small(AlgorithmKind::Pi2);
        c.lambda_init = 1e308;
        c.duration = 0.1;
        c.viapoint_time = 0.05;
        let failure = run(&c).unwrap().remove(0).unwrap_err();
        assert_eq!(failure.partial.rows.len(), failure_update(&failure.error));
    }

    fn failure_update(e: &RunError) -> usize {
        match e {
            RunError::NonFiniteCost { update, .. } => *update,
            other => panic!("unexpected {other:?}"),
        }
    }
}
