//! Closed-loop validation of a learned skill: a Cartesian impedance law
//! tracking the rolled-out reference with a free-floating rigid body standing
//! in for the robot's end effector.
//!
//! The controller wrench is `K e + D de + ff`, where the error stacks the
//! position difference and the orientation difference `2 log(q_ref *
//! conj(q))`, the damping is tied to the stiffness by `D = sqrt(2 K)`
//! elementwise, and `ff` is an optional feedforward. Joint-space use maps the
//! wrench through a manipulator Jacobian transpose.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::Deserialize;
use std::path::Path;

use crate::dmp::Trajectory;
use crate::error::{Error, Result};
use crate::quaternion::UnitQuaternion;

/// A force/torque pair in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub const ZERO: Self = Self {
        force: Vector3::new(0.0, 0.0, 0.0),
        torque: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;

    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

#[derive(Debug, Clone, Copy)]
pub struct Twist {
    pub linear: Vector3<f64>,
    /// Rotation-vector rate (rad/s), twice the tangent-space velocity.
    pub angular: Vector3<f64>,
}

impl Twist {
    pub const ZERO: Self = Self {
        linear: Vector3::new(0.0, 0.0, 0.0),
        angular: Vector3::new(0.0, 0.0, 0.0),
    };
}

/// Damping matched to stiffness, `d_i = sqrt(2 k_i)` per axis. Stiffness must
/// be strictly positive.
pub fn damping_from_stiffness(stiffness: &Vector6<f64>) -> Result<Vector6<f64>> {
    if stiffness.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::Domain(format!(
            "damping needs strictly positive stiffness, got {:?}",
            stiffness.as_slice()
        )));
    }
    Ok(Vector6::from_iterator(
        stiffness.iter().map(|k| (2.0 * k).sqrt()),
    ))
}

/// The impedance control law. Fails (domain error) when the actual
/// orientation is antipodal to the reference, where the orientation error is
/// undefined.
pub fn compute_wrench(
    stiffness: &Vector6<f64>,
    reference: &Pose,
    actual: &Pose,
    reference_twist: &Twist,
    actual_twist: &Twist,
    feedforward: &Wrench,
) -> Result<Wrench> {
    let damping = damping_from_stiffness(stiffness)?;
    let e_p = reference.position - actual.position;
    let e_o = (reference.orientation * actual.orientation.conjugate()).log()? * 2.0;
    let de_p = reference_twist.linear - actual_twist.linear;
    let de_o = reference_twist.angular - actual_twist.angular;
    let force = Vector3::from_iterator(
        (0..3).map(|a| stiffness[a] * e_p[a] + damping[a] * de_p[a] + feedforward.force[a]),
    );
    let torque = Vector3::from_iterator((0..3).map(|a| {
        stiffness[a + 3] * e_o[a] + damping[a + 3] * de_o[a] + feedforward.torque[a]
    }));
    Ok(Wrench { force, torque })
}

/// Maps a Cartesian wrench to joint torques through the Jacobian transpose.
pub fn map_to_joint_torques(wrench: &Wrench, jacobian: &DMatrix<f64>) -> Result<DVector<f64>> {
    if jacobian.nrows() != 6 {
        return Err(Error::Validation(format!(
            "jacobian must have 6 rows, got {}",
            jacobian.nrows()
        )));
    }
    if jacobian.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("jacobian contains non-finite entries".to_string()));
    }
    Ok(jacobian.transpose() * wrench.as_vector())
}

/// Free-floating rigid body standing in for the end effector: unit mass and a
/// small diagonal rotational inertia by default.
#[derive(Debug, Clone, Copy)]
pub struct SimBody {
    pub mass: f64,
    /// Diagonal inertia (kg m^2) in world axes; gyroscopic coupling is
    /// deliberately ignored at these speeds.
    pub inertia: Vector3<f64>,
    pub pose: Pose,
    pub twist: Twist,
}

impl SimBody {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            mass: 1.0,
            inertia: Vector3::repeat(0.01),
            pose,
            twist: Twist::ZERO,
        }
    }
}

/// An external wrench applied while `t_on <= t < t_off`.
#[derive(Debug, Clone, Copy)]
pub struct Disturbance {
    pub t_on: f64,
    pub t_off: f64,
    pub wrench: Wrench,
}

#[derive(Deserialize)]
struct DisturbanceRow {
    t_on: f64,
    t_off: f64,
    #[serde(default)]
    force: [f64; 3],
    #[serde(default)]
    torque: [f64; 3],
}

/// Loads a disturbance script: a JSON list of
/// `{"t_on": .., "t_off": .., "force": [fx, fy, fz], "torque": [tx, ty, tz]}`
/// entries (either wrench part may be omitted).
pub fn load_disturbances(path: &Path) -> Result<Vec<Disturbance>> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<DisturbanceRow> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    rows.into_iter()
        .map(|r| {
            if !(r.t_on.is_finite() && r.t_off.is_finite() && r.t_on < r.t_off) {
                return Err(Error::Validation(format!(
                    "disturbance window [{}, {}) is invalid",
                    r.t_on, r.t_off
                )));
            }
            let force = Vector3::from_row_slice(&r.force);
            let torque = Vector3::from_row_slice(&r.torque);
            if !(force.iter().all(|v| v.is_finite()) && torque.iter().all(|v| v.is_finite())) {
                return Err(Error::Validation("disturbance wrench is not finite".to_string()));
            }
            Ok(Disturbance {
                t_on: r.t_on,
                t_off: r.t_off,
                wrench: Wrench { force, torque },
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    /// World-frame gravity; off by default, since the feedforward wrench is
    /// where static compensation belongs.
    pub gravity: Option<Vector3<f64>>,
    pub feedforward: Wrench,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            gravity: None,
            feedforward: Wrench::ZERO,
        }
    }
}

/// Full closed-loop record at the controller rate.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub position_error: Vec<Vector3<f64>>,
    pub orientation_error: Vec<Vector3<f64>>,
    /// Commanded wrench (controller output only, exclusive of disturbances).
    pub wrench: Vec<Wrench>,
    pub stiffness: Vec<Vector6<f64>>,
    pub body_positions: Vec<Vector3<f64>>,
    pub body_orientations: Vec<UnitQuaternion>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Per-axis mean absolute tracking error over `t_lo <= t <= t_hi`.
    pub fn mean_abs_error_between(&self, t_lo: f64, t_hi: f64) -> Vector6<f64> {
        let mut acc = Vector6::zeros();
        let mut count = 0usize;
        for i in 0..self.t.len() {
            if self.t[i] < t_lo || self.t[i] > t_hi {
                continue;
            }
            for a in 0..3 {
                acc[a] += self.position_error[i][a].abs();
                acc[a + 3] += self.orientation_error[i][a].abs();
            }
            count += 1;
        }
        if count > 0 {
            acc /= count as f64;
        }
        acc
    }

    pub fn mean_abs_error(&self) -> Vector6<f64> {
        let (lo, hi) = (self.t[0], self.t[self.t.len() - 1]);
        self.mean_abs_error_between(lo, hi)
    }
}

/// Runs the impedance loop against a rolled-out reference.
///
/// The reference grid step must be an integer multiple of `dt`; pose,
/// stiffness, and twist references are interpolated inside each segment
/// (twist held constant per segment). Integration is semi-implicit Euler with
/// a geometric orientation step; a diverging state aborts with an integration
/// error.
pub fn simulate(
    reference: &Trajectory,
    body: &SimBody,
    disturbances: &[Disturbance],
    options: &SimOptions,
) -> Result<SimTrace> {
    let m = reference.len();
    if m < 2 {
        return Err(Error::Validation(
            "reference needs at least 2 samples".to_string(),
        ));
    }
    let dt = options.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if !(body.mass > 0.0) || body.inertia.iter().any(|i| !(*i > 0.0)) {
        return Err(Error::Validation(
            "body mass and inertia must be positive".to_string(),
        ));
    }
    let step = reference.t[1] - reference.t[0];
    for w in reference.t.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::Validation(
                "reference grid must be uniform".to_string(),
            ));
        }
    }
    let ratio_f = step / dt;
    let ratio = ratio_f.round() as usize;
    if ratio == 0 || (ratio_f - ratio as f64).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "controller step {dt} must divide the reference step {step}"
        )));
    }

    // Per-segment tangent steps and twists.
    let mut seg_tangent = Vec::with_capacity(m - 1);
    let mut seg_twist = Vec::with_capacity(m - 1);
    for j in 0..m - 1 {
        let u = (reference.quaternions[j + 1] * reference.quaternions[j].conjugate()).log()?;
        seg_tangent.push(u);
        seg_twist.push(Twist {
            linear: (reference.positions[j + 1] - reference.positions[j]) / step,
            angular: u * 2.0 / step,
        });
    }

    let n = ratio * (m - 1);
    let mut trace = SimTrace {
        t: Vec::with_capacity(n + 1),
        position_error: Vec::with_capacity(n + 1),
        orientation_error: Vec::with_capacity(n + 1),
        wrench: Vec::with_capacity(n + 1),
        stiffness: Vec::with_capacity(n + 1),
        body_positions: Vec::with_capacity(n + 1),
        body_orientations: Vec::with_capacity(n + 1),
    };

    let mut pose = body.pose;
    let mut twist = body.twist;

    for i in 0..=n {
        let t = i as f64 * dt;
        let j = (i / ratio).min(m - 2);
        let alpha = (i - j * ratio) as f64 / ratio as f64;

        let p_ref = reference.positions[j] * (1.0 - alpha) + reference.positions[j + 1] * alpha;
        let q_ref = UnitQuaternion::exp(&(seg_tangent[j] * alpha)) * reference.quaternions[j];
        let k_ref =
            reference.stiffness[j] * (1.0 - alpha) + reference.stiffness[j + 1] * alpha;
        let ref_pose = Pose {
            position: p_ref,
            orientation: q_ref,
        };

        let commanded = compute_wrench(
            &k_ref,
            &ref_pose,
            &pose,
            &seg_twist[j],
            &twist,
            &options.feedforward,
        )?;

        trace.t.push(t);
        trace
            .position_error
            .push(ref_pose.position - pose.position);
        trace.orientation_error.push(
            (ref_pose.orientation * pose.orientation.conjugate()).log()? * 2.0,
        );
        trace.wrench.push(commanded);
        trace.stiffness.push(k_ref);
        trace.body_positions.push(pose.position);
        trace.body_orientations.push(pose.orientation);

        if i == n {
            break;
        }

        // External contributions act on the body but are not part of the
        // commanded wrench.
        let mut external = commanded;
        for d in disturbances {
            if d.t_on <= t && t < d.t_off {
                external = external + d.wrench;
            }
        }
        if let Some(g) = options.gravity {
            external.force += g * body.mass;
        }

        // Semi-implicit Euler: velocities first, then configuration with the
        // updated velocities; orientation advances on the sphere.
        twist.linear += external.force * (dt / body.mass);
        twist.angular += Vector3::from_iterator(
            (0..3).map(|a| external.torque[a] / body.inertia[a] * dt),
        );
        pose.position += twist.linear * dt;
        let step_rot = UnitQuaternion::exp(&(twist.angular * (dt / 2.0)));
        let (w, x, y, z) = step_rot.product_raw(&pose.orientation);
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > crate::dmp::NORM_DRIFT_TOL {
            return Err(Error::Integration(format!(
                "orientation norm drifted to {norm} at t = {t}"
            )));
        }
        pose.orientation = UnitQuaternion::new(w, x, y, z)?;

        if pose.position.norm() > 1e3 || !pose.position.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration(format!(
                "body diverged at t = {t} (position {:?})",
                pose.position.as_slice()
            )));
        }
    }

    Ok(trace)
}

/// Replaces a reference's stiffness track with a constant vector; used for
/// constant-stiffness comparison runs.
pub fn with_constant_stiffness(reference: &Trajectory, stiffness: Vector6<f64>) -> Trajectory {
    Trajectory {
        t: reference.t.clone(),
        positions: reference.positions.clone(),
        quaternions: reference.quaternions.clone(),
        stiffness: vec![stiffness; reference.t.len()],
    }
}
