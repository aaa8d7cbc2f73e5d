//! Planar serial arm and the viapoint cost.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::dmp::Trajectory;
use crate::error::{Error, Result};
use crate::scalar::{cast, count, Real};

/// Kinematic chain of revolute joints in the plane, rooted at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel<T: Real> {
    pub link_lengths: DVector<T>,
}

/// Joint positions (joint `d` sits at the end of link `d`) and the
/// end-effector, which is the last of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPose<T: Real> {
    pub joints: Vec<(T, T)>,
    pub end_effector: (T, T),
}

impl<T: Real> ArmModel<T> {
    pub fn new(link_lengths: DVector<T>) -> Result<Self> {
        if link_lengths.is_empty() || link_lengths.iter().any(|&l| !(l > T::zero())) {
            return Err(Error::arg("link lengths must be positive"));
        }
        Ok(Self { link_lengths })
    }

    /// `dofs` equal links adding up to `total_length`.
    pub fn uniform(dofs: usize, total_length: T) -> Result<Self> {
        if dofs == 0 {
            return Err(Error::arg("an arm needs at least one link"));
        }
        Self::new(DVector::from_element(dofs, total_length / count::<T>(dofs)))
    }

    pub fn dofs(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> T {
        self.link_lengths.sum()
    }
}

/// Joint angles are relative; absolute link angles are their running sums.
pub fn forward_kinematics<T: Real>(arm: &ArmModel<T>, joint_angles: &[T]) -> Result<ArmPose<T>> {
    if joint_angles.len() != arm.dofs() {
        return Err(Error::arg(format!(
            "{} joint angles for a {}-DOF arm",
            joint_angles.len(),
            arm.dofs()
        )));
    }
    let (mut x, mut y, mut heading) = (T::zero(), T::zero(), T::zero());
    let mut joints = Vec::with_capacity(arm.dofs());
    for (&l, &a) in arm.link_lengths.iter().zip(joint_angles) {
        heading += a;
        x += l * heading.cos();
        y += l * heading.sin();
        joints.push((x, y));
    }
    Ok(ArmPose {
        end_effector: (x, y),
        joints,
    })
}

/// Uniform joint angle `φ ∈ (0, π/2]` that puts the end-effector on the y-axis.
///
/// The first sign change of `x_end(φ)` is bracketed by a grid scan and then
/// refined by bisection.
pub fn final_posture<T: Real>(arm: &ArmModel<T>) -> Result<DVector<T>> {
    let d = arm.dofs();
    let reach_x = |phi: T| -> T {
        let angles = vec![phi; d];
        forward_kinematics(arm, &angles)
            .map(|p| p.end_effector.0)
            .unwrap_or_else(|_| cast::<T>(f64::NAN))
    };

    let upper = T::frac_pi_2();
    let grid = 4096;
    let mut lo = T::zero();
    let mut f_lo = reach_x(lo);
    let mut bracket = None;
    for k in 1..=grid {
        let hi = upper * count::<T>(k) / count::<T>(grid);
        let f_hi = reach_x(hi);
        if f_hi.abs() <= cast::<T>(1e-12) {
            bracket = Some((hi, hi));
            break;
        }
        if (f_lo > T::zero()) != (f_hi > T::zero()) {
            bracket = Some((lo, hi));
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let (mut a, mut b) = bracket.ok_or_else(|| {
        Error::Configuration("no uniform posture in (0, π/2] puts the end-effector on the y-axis".into())
    })?;

    let tol = cast::<T>(1e-10);
    for _ in 0..200 {
        if a == b {
            break;
        }
        let mid = (a + b) * cast(0.5);
        if mid == a || mid == b {
            break;
        }
        let f_mid = reach_x(mid);
        if (reach_x(a) > T::zero()) == (f_mid > T::zero()) {
            a = mid;
        } else {
            b = mid;
        }
    }
    let phi = if reach_x(a).abs() <= reach_x(b).abs() { a } else { b };
    if reach_x(phi).abs() >= tol * arm.reach().max(T::one()) {
        return Err(Error::Configuration(format!(
            "uniform posture solve did not converge (x = {})",
            reach_x(phi)
        )));
    }
    Ok(DVector::from_element(d, phi))
}

/// Viapoint task: reach `viapoint` at `viapoint_time` with little joint
/// acceleration, weighting joints near the base more heavily.
#[derive(Debug, Clone, PartialEq)]
pub struct ViapointTask<T: Real> {
    pub viapoint: (T, T),
    pub viapoint_time: T,
    pub duration: T,
    pub dof_weights: DVector<T>,
    /// Multiplier on the squared viapoint distance; 1 leaves the cost as the
    /// plain sum of the two terms.
    pub viapoint_weight: T,
}

impl<T: Real> ViapointTask<T> {
    /// DOF weights `D + 1 - d` for `d = 1..=D`.
    pub fn new(dofs: usize, viapoint: (T, T), viapoint_time: T, duration: T) -> Result<Self> {
        let task = Self {
            viapoint,
            viapoint_time,
            duration,
            dof_weights: DVector::from_iterator(dofs, (1..=dofs).map(|d| count::<T>(dofs + 1 - d))),
            viapoint_weight: T::one(),
        };
        task.validate()?;
        Ok(task)
    }

    /// Same task with the viapoint term scaled by `weight`.
    pub fn with_viapoint_weight(mut self, weight: T) -> Result<Self> {
        self.viapoint_weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viapoint_weight > T::zero()) || !self.viapoint_weight.is_finite() {
            return Err(Error::arg("viapoint weight must be positive and finite"));
        }
        if !(self.viapoint_time > T::zero() && self.viapoint_time < self.duration) {
            return Err(Error::arg("viapoint time must lie strictly inside the movement"));
        }
        if self.dof_weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::arg("DOF weights must be positive"));
        }
        if self.dof_weights.as_slice().windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::arg("DOF weights must be strictly decreasing"));
        }
        Ok(())
    }
}

/// Per-step cost: weighted squared distance to the viapoint at the step
/// nearest the viapoint time, plus the normalized weighted sum of squared joint
/// accelerations at every step.
pub fn viapoint_cost<T: Real>(task: &ViapointTask<T>, arm: &ArmModel<T>, traj: &Trajectory<T>) -> Result<DVector<T>> {
    let d = arm.dofs();
    if traj.dofs() != d || task.dof_weights.len() != d {
        return Err(Error::arg("trajectory, arm and task disagree on the number of DOFs"));
    }
    let n = traj.len();
    let dt = traj
        .dt()
        .ok_or_else(|| Error::arg("trajectory needs at least two samples"))?;
    let via_step = ((task.viapoint_time - traj.times[0]) / dt).round().to_usize().unwrap_or(usize::MAX);
    if task.viapoint_time > traj.times[n - 1] || via_step >= n {
        return Err(Error::arg(format!(
            "trajectory ends before the viapoint time {}",
            task.viapoint_time
        )));
    }

    let norm = task.dof_weights.sum();
    let mut cost = DVector::zeros(n);
    for i in 0..n {
        let row = traj.accelerations.row(i);
        let effort = task
            .dof_weights
            .iter()
            .zip(row.iter())
            .fold(T::zero(), |acc, (&w, &a)| acc + w * a * a);
        cost[i] = effort / norm;
    }
    let angles: Vec<T> = traj.positions.row(via_step).iter().copied().collect();
    let (x, y) = forward_kinematics(arm, &angles)?.end_effector;
    let (vx, vy) = task.viapoint;
    cost[via_step] += task.viapoint_weight * ((x - vx) * (x - vx) + (y - vy) * (y - vy));
    Ok(cost)
}

/// `t,x,y` end-effector path, one row per step.
pub fn end_effector_csv<T: Real>(arm: &ArmModel<T>, traj: &Trajectory<T>) -> Result<String> {
    let mut out = String::from("t,x,y\n");
    for i in 0..traj.len() {
        let angles: Vec<T> = traj.positions.row(i).iter().copied().collect();
        let (x, y) = forward_kinematics(arm, &angles)?.end_effector;
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", traj.times[i], x, y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::FRAC_PI_2;

    fn ten_link() -> ArmModel<f64> {
        ArmModel::uniform(10, 1.0).unwrap()
    }

    fn still(n: usize, d: usize, angles: &[f64], dt: f64) -> Trajectory<f64> {
        Trajectory {
            times: DVector::from_iterator(n, (0..n).map(|i| i as f64 * dt)),
            positions: DMatrix::from_fn(n, d, |_, j| angles[j]),
            velocities: DMatrix::zeros(n, d),
            accelerations: DMatrix::zeros(n, d),
        }
    }

    #[test]
    fn stretched_arm() {
        let p = forward_kinematics(&ten_link(), &[0.0; 10]).unwrap();
        assert_relative_eq!(p.end_effector.0, 1.0, epsilon = 1e-12);
        assert_eq!(p.end_effector.1, 0.0);
        assert_eq!(p.joints.len(), 10);
    }

    #[test]
    fn rotated_base() {
        let mut a = [0.0; 10];
        a[0] = FRAC_PI_2;
        let p = forward_kinematics(&ten_link(), &a).unwrap();
        assert!(p.end_effector.0.abs() < 1e-12);
        assert_relative_eq!(p.end_effector.1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_link_elbow() {
        let arm = ArmModel::new(DVector::from_vec(vec![0.1, 0.1])).unwrap();
        let p = forward_kinematics(&arm, &[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        assert_relative_eq!(p.end_effector.0, 0.1, epsilon = 1e-12);
        assert_relative_eq!(p.end_effector.1, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn final_posture_touches_y_axis() {
        let arm = ten_link();
        let q = final_posture(&arm).unwrap();
        let x = forward_kinematics(&arm, q.as_slice()).unwrap().end_effector.0;
        assert!(x.abs() < 1e-10);
        // bisection oracle on sum cos(d phi) = 0
        let f = |p: f64| (1..=10).map(|d| (d as f64 * p).cos()).sum::<f64>();
        let (mut a, mut b) = (0.1, 0.4);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if f(a).signum() == f(m).signum() {
                a = m
            } else {
                b = m
            }
        }
        assert_relative_eq!(q[0], a, epsilon = 1e-9);
        assert_relative_eq!(q[0], std::f64::consts::PI / 11.0, epsilon = 1e-9);
    }

    #[test]
    fn single_link_posture() {
        let arm = ArmModel::new(DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(final_posture(&arm).unwrap()[0], FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn cost_vanishes_on_viapoint_without_motion() {
        let arm = ArmModel::new(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let task = ViapointTask::new(2, (0.5, 0.5), 0.3, 0.5).unwrap();
        let tr = still(51, 2, &[0.0, FRAC_PI_2], 0.01);
        let c = viapoint_cost(&task, &arm, &tr).unwrap();
        assert!(c.iter().all(|&x| x.abs() < 1e-20));
    }

    #[test]
    fn viapoint_miss_costs_squared_distance() {
        let arm = ArmModel::new(DVector::from_vec(vec![0.5, 0.4])).unwrap();
        let task = ViapointTask::new(2, (0.5, 0.5), 0.3, 0.5).unwrap();
        let tr = still(51, 2, &[0.0, FRAC_PI_2], 0.01);
        let c = viapoint_cost(&task, &arm, &tr).unwrap();
        for (i, &x) in c.iter().enumerate() {
            if i == 30 {
                assert_relative_eq!(x, 0.01, epsilon = 1e-12);
            } else {
                assert_eq!(x, 0.0);
            }
        }
    }

    #[test]
    fn weighted_acceleration_term() {
        let arm = ArmModel::new(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let task = ViapointTask::new(2, (0.5, 0.5), 0.3, 0.5).unwrap();
        assert_eq!(task.dof_weights.as_slice(), &[2.0, 1.0]);
        let mut tr = still(51, 2, &[0.0, FRAC_PI_2], 0.01);
        tr.accelerations[(5, 0)] = 1.0;
        tr.accelerations[(5, 1)] = 1.0;
        let c = viapoint_cost(&task, &arm, &tr).unwrap();
        assert_relative_eq!(c[5], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let arm = ten_link();
        let task = ViapointTask::new(10, (0.5, 0.5), 0.3, 0.5).unwrap();
        let tr = still(20, 10, &[0.0; 10], 0.01);
        assert!(viapoint_cost(&task, &arm, &tr).is_err());
    }

    #[test]
    fn task_invariants() {
        assert!(ViapointTask::<f64>::new(3, (0.5, 0.5), 0.6, 0.5).is_err());
        assert!(ViapointTask::<f64>::new(3, (0.5, 0.5), 0.0, 0.5).is_err());
        assert!(ArmModel::new(DVector::from_vec(vec![0.1, 0.0])).is_err());
    }

    #[test]
    fn path_csv() {
        let arm = ten_link();
        let csv = end_effector_csv(&arm, &still(3, 10, &[0.0; 10], 0.01)).unwrap();
        assert!(csv.starts_with("t,x,y\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
