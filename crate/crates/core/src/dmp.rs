//! Discrete Dynamic Movement Primitives.
//!
//! Each degree of freedom is a critically damped spring-damper pulled towards
//! its goal, perturbed by a forcing term that is a normalized mixture of
//! Gaussian kernels in a decaying phase variable:
//!
//! ```text
//! x(t)   = exp(-alpha_x t / T)
//! T ż    = alpha_z (beta_z (g - y) - z) + f(x)
//! T ẏ    = z
//! f(x)   = x (g - y0) Σ ψ_b(x) θ_b / Σ ψ_b(x),   ψ_b(x) = exp(-(x - c_b)² / (2 w_b²))
//! ```
//!
//! The forcing term is linear in the weights `θ`, which is what makes the
//! policy searchable by the optimizers in this crate.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cast, count, Real};

pub const DEFAULT_ALPHA_Z: f64 = 25.0;
pub const DEFAULT_BETA_Z: f64 = 6.25;
pub const DEFAULT_ALPHA_X: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DmpPolicy<T: Real> {
    /// One row of basis weights per degree of freedom.
    pub theta: DMatrix<T>,
    pub start: DVector<T>,
    pub goal: DVector<T>,
    pub duration: T,
    pub centers: DVector<T>,
    pub widths: DVector<T>,
    pub alpha_z: T,
    pub beta_z: T,
    pub alpha_x: T,
}

impl<T: Real> DmpPolicy<T> {
    /// Zero-weight policy with the default constants and `basis_count`
    /// kernels spread evenly in time.
    pub fn new(start: DVector<T>, goal: DVector<T>, duration: T, basis_count: usize) -> Result<Self> {
        Self::with_constants(
            start,
            goal,
            duration,
            basis_count,
            cast(DEFAULT_ALPHA_Z),
            cast(DEFAULT_BETA_Z),
            cast(DEFAULT_ALPHA_X),
        )
    }

    pub fn with_constants(
        start: DVector<T>,
        goal: DVector<T>,
        duration: T,
        basis_count: usize,
        alpha_z: T,
        beta_z: T,
        alpha_x: T,
    ) -> Result<Self> {
        if basis_count < 2 {
            return Err(Error::arg("a DMP needs at least two basis functions"));
        }
        let (centers, widths) = default_basis(basis_count, alpha_x);
        let policy = Self {
            theta: DMatrix::zeros(start.len(), basis_count),
            start,
            goal,
            duration,
            centers,
            widths,
            alpha_z,
            beta_z,
            alpha_x,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn dofs(&self) -> usize {
        self.start.len()
    }

    pub fn basis_count(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.start.len();
        let b = self.centers.len();
        if b < 2 {
            return Err(Error::arg("a DMP needs at least two basis functions"));
        }
        if self.goal.len() != d || self.theta.shape() != (d, b) || self.widths.len() != b {
            return Err(Error::arg("DMP fields have inconsistent dimensions"));
        }
        if self.widths.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::arg("basis widths must be positive"));
        }
        if !(self.duration > T::zero()) {
            return Err(Error::arg("duration must be positive"));
        }
        if !(self.alpha_z > T::zero() && self.beta_z > T::zero() && self.alpha_x > T::zero()) {
            return Err(Error::arg("DMP constants must be positive"));
        }
        let critical = self.beta_z * cast(4.0);
        if (self.alpha_z - critical).abs() > cast::<T>(1e-9) * critical {
            return Err(Error::arg("alpha_z must equal 4 beta_z for critical damping"));
        }
        Ok(())
    }

    /// Canonical phase at time `t`.
    pub fn phase(&self, t: T) -> T {
        (-self.alpha_x * t / self.duration).exp()
    }

    /// Goal-scaling factor of the forcing term for DOF `dof`.
    fn amplitude(&self, dof: usize) -> T {
        let a = self.goal[dof] - self.start[dof];
        if a == T::zero() {
            T::one()
        } else {
            a
        }
    }

    /// Forcing term `f(x)` for DOF `dof` under weights `weights`.
    pub fn forcing(&self, dof: usize, x: T, weights: &[T]) -> T {
        let act = basis_activations(self, x);
        let mix = act.iter().zip(weights).fold(T::zero(), |a, (&p, &w)| a + p * w);
        x * self.amplitude(dof) * mix
    }

    /// Number of samples of a trajectory of this policy at step `dt`.
    pub fn steps(&self, dt: T) -> usize {
        (self.duration / dt).round().to_usize().unwrap_or(0) + 1
    }

    /// Basis activations for every sample time at step `dt` (one row per step).
    pub fn activation_table(&self, dt: T) -> DMatrix<T> {
        let n = self.steps(dt);
        let b = self.basis_count();
        let mut table = DMatrix::zeros(n, b);
        for i in 0..n {
            let act = basis_activations(self, self.phase(count::<T>(i) * dt));
            table.row_mut(i).copy_from(&act.transpose());
        }
        table
    }
}

/// Centers at the phase values of `B` equally spaced times over `[0, T]`;
/// each width makes a kernel drop to one half at its neighbor's center.
fn default_basis<T: Real>(b: usize, alpha_x: T) -> (DVector<T>, DVector<T>) {
    let centers = DVector::from_iterator(
        b,
        (0..b).map(|j| (-alpha_x * count::<T>(j) / count::<T>(b - 1)).exp()),
    );
    let spread = (cast::<T>(2.0) * cast::<T>(2.0).ln()).sqrt();
    let widths = DVector::from_iterator(
        b,
        (0..b).map(|j| {
            let gap = if j + 1 < b {
                centers[j] - centers[j + 1]
            } else {
                centers[j - 1] - centers[j]
            };
            gap.abs() / spread
        }),
    );
    (centers, widths)
}

/// Normalized Gaussian kernel activations at phase `x`; they sum to one.
pub fn basis_activations<T: Real>(policy: &DmpPolicy<T>, x: T) -> DVector<T> {
    let half = cast::<T>(0.5);
    let raw = DVector::from_iterator(
        policy.centers.len(),
        policy
            .centers
            .iter()
            .zip(policy.widths.iter())
            .map(|(&c, &w)| (-half * (x - c) * (x - c) / (w * w)).exp()),
    );
    let total = raw.sum();
    if total > T::zero() {
        raw / total
    } else {
        // every kernel underflowed: fall back to the nearest center
        let nearest = policy
            .centers
            .iter()
            .enumerate()
            .min_by(|a, b| (*a.1 - x).abs().partial_cmp(&(*b.1 - x).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut one_hot = DVector::zeros(policy.centers.len());
        one_hot[nearest] = T::one();
        one_hot
    }
}

/// Sampled joint trajectory; rows are time steps, columns degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub times: DVector<T>,
    pub positions: DMatrix<T>,
    pub velocities: DMatrix<T>,
    pub accelerations: DMatrix<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dofs(&self) -> usize {
        self.positions.ncols()
    }

    pub fn dt(&self) -> Option<T> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }

    /// `t,pos_1..pos_D,vel_1..vel_D,acc_1..acc_D`, one row per step.
    pub fn to_csv(&self) -> String {
        let d = self.dofs();
        let mut out = String::from("t");
        for prefix in ["pos", "vel", "acc"] {
            for j in 1..=d {
                let _ = write!(out, ",{prefix}_{j}");
            }
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.times[i]);
            for m in [&self.positions, &self.velocities, &self.accelerations] {
                for j in 0..d {
                    let _ = write!(out, ",{:.16e}", m[(i, j)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Explicit-Euler rollout of the policy from rest at its start.
///
/// `exploration`, when given, holds one `N x B` offset matrix per DOF; row `i`
/// is added to that DOF's weights at step `i`.
pub fn integrate<T: Real>(
    policy: &DmpPolicy<T>,
    dt: T,
    exploration: Option<&[DMatrix<T>]>,
) -> Result<Trajectory<T>> {
    policy.validate()?;
    if !(dt > T::zero()) || dt > policy.duration / cast(10.0) {
        return Err(Error::arg(format!("time step {dt} must lie in (0, T/10]")));
    }
    let n = policy.steps(dt);
    let d = policy.dofs();
    let b = policy.basis_count();
    if let Some(offsets) = exploration {
        if offsets.len() != d || offsets.iter().any(|m| m.shape() != (n, b)) {
            return Err(Error::arg(format!(
                "exploration must hold {d} matrices of shape {n}x{b}"
            )));
        }
    }

    let tau = policy.duration;
    let times = DVector::from_iterator(n, (0..n).map(|i| count::<T>(i) * dt));
    let mut positions = DMatrix::zeros(n, d);
    let mut velocities = DMatrix::zeros(n, d);
    let mut accelerations = DMatrix::zeros(n, d);
    let mut weights = vec![T::zero(); b];
    let mut y = policy.start.clone();
    let mut z = DVector::<T>::zeros(d);

    for i in 0..n {
        let x = policy.phase(times[i]);
        let act = basis_activations(policy, x);
        for j in 0..d {
            for (q, w) in weights.iter_mut().enumerate() {
                *w = policy.theta[(j, q)];
                if let Some(offsets) = exploration {
                    *w += offsets[j][(i, q)];
                }
            }
            let mix = act.iter().zip(&weights).fold(T::zero(), |a, (&p, &w)| a + p * w);
            let f = x * policy.amplitude(j) * mix;
            let zdot = (policy.alpha_z * (policy.beta_z * (policy.goal[j] - y[j]) - z[j]) + f) / tau;

            positions[(i, j)] = y[j];
            velocities[(i, j)] = z[j] / tau;
            accelerations[(i, j)] = zdot / tau;

            y[j] += dt * z[j] / tau;
            z[j] += dt * zdot;
        }
    }

    Ok(Trajectory {
        times,
        positions,
        velocities,
        accelerations,
    })
}

/// Least-squares fit of the basis weights to the forcing term a
/// demonstration requires.
///
/// Start, goal, duration and constants come from `template`; only `theta`
/// is replaced.
pub fn train_from_trajectory<T: Real>(demo: &Trajectory<T>, template: &DmpPolicy<T>) -> Result<DmpPolicy<T>> {
    template.validate()?;
    let d = template.dofs();
    let b = template.basis_count();
    let n = demo.len();
    if demo.dofs() != d
        || demo.velocities.shape() != (n, d)
        || demo.accelerations.shape() != (n, d)
    {
        return Err(Error::arg("demonstration does not match the template's DOFs"));
    }
    if n < b {
        return Err(Error::Fitting(format!(
            "{n} samples cannot determine {b} basis weights"
        )));
    }

    let tau = template.duration;
    let mut features = DMatrix::zeros(n, b);
    for i in 0..n {
        let x = template.phase(demo.times[i]);
        let act = basis_activations(template, x);
        for q in 0..b {
            features[(i, q)] = x * act[q];
        }
    }

    let svd = features.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * count::<T>(n.max(b)) * T::default_epsilon();
    if svd.rank(tol) < b {
        return Err(Error::Fitting("demonstration yields a rank-deficient regression".into()));
    }

    let mut policy = template.clone();
    for j in 0..d {
        let g = template.goal[j];
        let amp = template.amplitude(j);
        let target = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let y = demo.positions[(i, j)];
                let yd = demo.velocities[(i, j)];
                let ydd = demo.accelerations[(i, j)];
                (tau * tau * ydd - template.alpha_z * (template.beta_z * (g - y) - tau * yd)) / amp
            }),
        );
        let w = svd
            .solve(&target, tol)
            .map_err(|e| Error::Fitting(e.to_string()))?;
        policy.theta.row_mut(j).copy_from(&w.transpose());
    }
    Ok(policy)
}

/// Minimum-jerk movement from `start` to `goal` over `duration`, with
/// analytic velocities and accelerations.
pub fn min_jerk<T: Real>(start: &DVector<T>, goal: &DVector<T>, duration: T, dt: T) -> Result<Trajectory<T>> {
    if start.len() != goal.len() {
        return Err(Error::arg("start and goal differ in length"));
    }
    if !(duration > T::zero()) || !(dt > T::zero()) || dt > duration / cast(10.0) {
        return Err(Error::arg(format!("time step {dt} must lie in (0, T/10]")));
    }
    let n = (duration / dt).round().to_usize().unwrap_or(0) + 1;
    let d = start.len();
    let times = DVector::from_iterator(n, (0..n).map(|i| count::<T>(i) * dt));
    let mut positions = DMatrix::zeros(n, d);
    let mut velocities = DMatrix::zeros(n, d);
    let mut accelerations = DMatrix::zeros(n, d);
    let c = |x: f64| cast::<T>(x);
    for i in 0..n {
        let s = times[i] / duration;
        let (s2, s3) = (s * s, s * s * s);
        let (s4, s5) = (s3 * s, s3 * s2);
        let p = c(10.0) * s3 - c(15.0) * s4 + c(6.0) * s5;
        let v = (c(30.0) * s2 - c(60.0) * s3 + c(30.0) * s4) / duration;
        let a = (c(60.0) * s - c(180.0) * s2 + c(120.0) * s3) / (duration * duration);
        for j in 0..d {
            let amp = goal[j] - start[j];
            positions[(i, j)] = start[j] + amp * p;
            velocities[(i, j)] = amp * v;
            accelerations[(i, j)] = amp * a;
        }
    }
    Ok(Trajectory {
        times,
        positions,
        velocities,
        accelerations,
    })
}
