//! Dynamic movement primitive with three transformation systems sharing one
//! phase variable: position (3 axes), orientation (quaternion, integrated on
//! the sphere), and stiffness (6 axes).
//!
//! Every axis obeys the same second-order pattern
//!
//! ```text
//! tau * dy = alpha * (beta * (g - p) - y) + G * f(x),    tau * dp = y
//! ```
//!
//! with a learned forcing term `f(x) = (sum_s theta_s psi_s(x)) /
//! (sum_s psi_s(x)) * x` that fades out as the phase `x = exp(-alpha_x t /
//! tau)` decays, leaving a critically damped pull to the goal. The diagonal
//! scaling `G` (goal minus start) re-scales the learned shape when the goal
//! moves. For orientation the role of `g - p` is played by the tangent-space
//! error `2 log(q_g * conj(q))` and integration steps stay on the sphere.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::TrajectoryDistribution;
use crate::quaternion::{hemisphere_align, UnitQuaternion};
use crate::stiffness::{StiffnessBounds, StiffnessProfile};

/// Scaling entries with magnitude below this are replaced by 1 (with a
/// warning): the axis barely moves, so modulating its forcing term by the
/// goal-start difference would divide by noise.
pub const SCALE_EPS: f64 = 1e-6;

/// Allowed quaternion norm drift per integration step before the rollout is
/// declared numerically broken.
pub const NORM_DRIFT_TOL: f64 = 1e-6;

/// Kernel width factor relative to neighbor spacing in `fit`: each basis
/// reaches its neighbor's center at `exp(-1/(2 overlap^2))` of its peak.
const BASIS_OVERLAP: f64 = 0.40;

/// Exponentially decaying phase shared by all transformation systems:
/// `x(t) = exp(-alpha_x t / tau)`, `x(0) = 1`.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalSystem {
    pub alpha_x: f64,
    pub tau: f64,
}

impl CanonicalSystem {
    pub fn new(alpha_x: f64, tau: f64) -> Result<Self> {
        if !(alpha_x > 0.0 && alpha_x.is_finite() && tau > 0.0 && tau.is_finite()) {
            return Err(Error::Validation(format!(
                "canonical system needs positive finite alpha_x and tau, got {alpha_x}, {tau}"
            )));
        }
        Ok(Self { alpha_x, tau })
    }

    pub fn phase(&self, t: f64) -> f64 {
        (-self.alpha_x * t / self.tau).exp()
    }
}

/// Gaussian basis functions over phase, `psi_s(x) = exp(-h_s (x - c_s)^2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSet {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl BasisSet {
    /// Centers placed at the phase values of uniformly spaced times, so the
    /// bases tile the trajectory evenly in time rather than in phase. Widths
    /// follow the neighbor spacing: `h_s = 1 / (2 (overlap * (c_s -
    /// c_{s+1}))^2)`, last width copied from its neighbor.
    pub fn uniform_in_time(count: usize, alpha_x: f64, overlap: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 basis functions, got {count}"
            )));
        }
        if !(overlap > 0.0 && overlap.is_finite() && alpha_x > 0.0) {
            return Err(Error::Validation(
                "basis overlap and decay must be positive".to_string(),
            ));
        }
        let centers: Vec<f64> = (0..count)
            .map(|s| (-alpha_x * s as f64 / (count - 1) as f64).exp())
            .collect();
        let mut widths: Vec<f64> = centers
            .windows(2)
            .map(|c| {
                let d = overlap * (c[0] - c[1]);
                1.0 / (2.0 * d * d)
            })
            .collect();
        widths.push(*widths.last().unwrap());
        Ok(Self { centers, widths })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn activations_into(&self, x: f64, out: &mut [f64]) {
        for (o, (c, h)) in out
            .iter_mut()
            .zip(self.centers.iter().zip(&self.widths))
        {
            let d = x - c;
            *o = (-h * d * d).exp();
        }
    }

    pub fn activations(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.activations_into(x, &mut out);
        out
    }
}

/// Normalized, phase-gated radial-basis regression:
/// `f(x) = (sum_s theta_s psi_s(x)) / (sum_s psi_s(x)) * x`.
pub fn forcing_term(basis: &BasisSet, weights: &[f64], x: f64) -> f64 {
    debug_assert_eq!(weights.len(), basis.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for ((c, h), th) in basis.centers.iter().zip(&basis.widths).zip(weights) {
        let d = x - c;
        let psi = (-h * d * d).exp();
        num += th * psi;
        den += psi;
    }
    if den < 1e-300 {
        return 0.0;
    }
    num / den * x
}

/// Attractor and phase gains. `beta = alpha / 4` gives critical damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub alpha_p: f64,
    pub beta_p: f64,
    pub alpha_q: f64,
    pub beta_q: f64,
    pub alpha_k: f64,
    pub beta_k: f64,
    pub alpha_x: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self::critically_damped(48.0, 48.0, 48.0, 6.0)
    }
}

impl Gains {
    pub fn critically_damped(alpha_p: f64, alpha_q: f64, alpha_k: f64, alpha_x: f64) -> Self {
        Self {
            alpha_p,
            beta_p: alpha_p / 4.0,
            alpha_q,
            beta_q: alpha_q / 4.0,
            alpha_k,
            beta_k: alpha_k / 4.0,
            alpha_x,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_p,
            self.beta_p,
            self.alpha_q,
            self.beta_q,
            self.alpha_k,
            self.beta_k,
            self.alpha_x,
        ];
        if all.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Validation("all gains must be positive".to_string()));
        }
        Ok(())
    }
}

/// A fitted primitive: basis weights for the twelve forcing dimensions plus
/// the anchors (start/goal states and start rates) they were learned against.
#[derive(Debug, Clone)]
pub struct DmpModel {
    pub gains: Gains,
    pub tau: f64,
    pub basis: BasisSet,
    /// 3 x S weights for the position forcing terms.
    pub weights_position: Vec<Vec<f64>>,
    /// 3 x S weights for the orientation forcing terms.
    pub weights_orientation: Vec<Vec<f64>>,
    /// 6 x S weights for the stiffness forcing terms.
    pub weights_stiffness: Vec<Vec<f64>>,
    pub start_position: Vector3<f64>,
    pub goal_position: Vector3<f64>,
    pub start_orientation: UnitQuaternion,
    pub goal_orientation: UnitQuaternion,
    pub start_stiffness: Vector6<f64>,
    pub goal_stiffness: Vector6<f64>,
    /// Scaled start rates (`tau` times the initial time derivative), so a
    /// rollout can leave the start the way the reference did.
    pub start_rate_position: Vector3<f64>,
    pub start_rate_orientation: Vector3<f64>,
    pub start_rate_stiffness: Vector6<f64>,
    pub bounds: StiffnessBounds,
}

/// Optional goal/duration changes applied at rollout time. `tau` is the new
/// total duration in seconds.
#[derive(Debug, Clone, Default)]
pub struct GoalOverride {
    pub position: Option<Vector3<f64>>,
    pub orientation: Option<UnitQuaternion>,
    pub stiffness: Option<Vector6<f64>>,
    pub tau: Option<f64>,
}

/// A rolled-out trajectory on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub quaternions: Vec<UnitQuaternion>,
    pub stiffness: Vec<Vector6<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }
}

fn scale_entry(delta: f64, axis: &str, system: &str) -> f64 {
    if delta.abs() < SCALE_EPS {
        log::warn!(
            "{system} axis {axis}: goal-start difference {delta:.3e} is below {SCALE_EPS}; \
             using unit scaling for its forcing term"
        );
        1.0
    } else {
        delta
    }
}

fn position_scale(start: &Vector3<f64>, goal: &Vector3<f64>, system: &str) -> Vector3<f64> {
    static AXES: [&str; 3] = ["x", "y", "z"];
    Vector3::from_iterator((0..3).map(|a| scale_entry(goal[a] - start[a], AXES[a], system)))
}

fn stiffness_scale(start: &Vector6<f64>, goal: &Vector6<f64>) -> Vector6<f64> {
    static AXES: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];
    Vector6::from_iterator((0..6).map(|a| scale_entry(goal[a] - start[a], AXES[a], "stiffness")))
}

fn orientation_scale(start: &UnitQuaternion, goal: &UnitQuaternion) -> Result<Vector3<f64>> {
    let e = (*goal * start.conjugate()).log()? * 2.0;
    static AXES: [&str; 3] = ["rx", "ry", "rz"];
    Ok(Vector3::from_iterator(
        (0..3).map(|a| scale_entry(e[a], AXES[a], "orientation")),
    ))
}

/// Second-order-accurate first derivative of a uniformly sampled series.
fn differentiate(series: &[f64], dt: f64) -> Vec<f64> {
    let m = series.len();
    let mut out = vec![0.0; m];
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
    for j in 1..m - 1 {
        out[j] = (series[j + 1] - series[j - 1]) / (2.0 * dt);
    }
    out[m - 1] = (3.0 * series[m - 1] - 4.0 * series[m - 2] + series[m - 3]) / (2.0 * dt);
    out
}

/// Second derivative of a uniformly sampled series.
fn differentiate2(series: &[f64], dt: f64) -> Vec<f64> {
    let m = series.len();
    let dt2 = dt * dt;
    let mut out = vec![0.0; m];
    out[0] = (series[0] - 2.0 * series[1] + series[2]) / dt2;
    for j in 1..m - 1 {
        out[j] = (series[j - 1] - 2.0 * series[j] + series[j + 1]) / dt2;
    }
    out[m - 1] = (series[m - 1] - 2.0 * series[m - 2] + series[m - 3]) / dt2;
    out
}

/// Locally weighted regression of one forcing dimension: each basis weight
/// minimizes its own activation-weighted residual against the target
/// `f_j approx theta * x_j`, giving
/// `theta_s = sum_j psi_s(x_j) x_j f_j / sum_j psi_s(x_j) x_j^2`.
fn learn_weights(basis: &BasisSet, phases: &[f64], targets: &[f64]) -> Vec<f64> {
    let mut weights = vec![0.0; basis.len()];
    for s in 0..basis.len() {
        let (c, h) = (basis.centers[s], basis.widths[s]);
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, f) in phases.iter().zip(targets) {
            let d = x - c;
            let psi = (-h * d * d).exp();
            num += psi * x * f;
            den += psi * x * x;
        }
        weights[s] = if den < 1e-300 { 0.0 } else { num / den };
    }
    weights
}

fn check_uniform_grid(grid: &[f64]) -> Result<f64> {
    if grid.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 grid samples to fit, got {}",
            grid.len()
        )));
    }
    if grid[0].abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "fit grid must start at 0, starts at {}",
            grid[0]
        )));
    }
    let dt = grid[1] - grid[0];
    if !(dt > 0.0) {
        return Err(Error::Validation("grid must be increasing".to_string()));
    }
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Validation(
                "fit grid must be uniformly spaced".to_string(),
            ));
        }
    }
    Ok(dt)
}

/// Fits the twelve forcing dimensions to a mean trajectory and stiffness
/// profile sharing one uniform grid.
pub fn fit(
    distribution: &TrajectoryDistribution,
    profile: &StiffnessProfile,
    gains: &Gains,
    basis_count: usize,
    bounds: &StiffnessBounds,
) -> Result<DmpModel> {
    gains.validate()?;
    bounds.validate()?;
    let grid = &distribution.grid;
    let dt = check_uniform_grid(grid)?;
    if profile.grid.len() != grid.len()
        || profile
            .grid
            .iter()
            .zip(grid)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::Validation(
            "stiffness profile grid does not match the trajectory grid".to_string(),
        ));
    }
    let m = grid.len();
    let tau = grid[m - 1];
    let canonical = CanonicalSystem::new(gains.alpha_x, tau)?;
    let basis = BasisSet::uniform_in_time(basis_count, gains.alpha_x, BASIS_OVERLAP)?;
    let phases: Vec<f64> = grid.iter().map(|&t| canonical.phase(t)).collect();

    let quats = hemisphere_align(&distribution.mean_quaternions);
    let positions = &distribution.mean_positions;
    let stiffness = &profile.stiffness;

    let p0 = positions[0];
    let pg = positions[m - 1];
    let q0 = quats[0];
    let qg = quats[m - 1];
    let k0 = stiffness[0];
    let kg = profile.goal();
    if !bounds.contains(&kg) || !bounds.contains(&k0) {
        return Err(Error::Validation(
            "stiffness profile endpoints violate the bounds".to_string(),
        ));
    }

    let g_p = position_scale(&p0, &pg, "position");
    let g_q = orientation_scale(&q0, &qg)?;
    let g_k = stiffness_scale(&k0, &kg);

    // Orientation rates: per-segment tangent steps give the rotation-vector
    // velocity; the last sample holds the final segment's rate.
    let mut omega: Vec<Vector3<f64>> = Vec::with_capacity(m);
    for j in 0..m - 1 {
        let r = (quats[j + 1] * quats[j].conjugate()).log()? * 2.0;
        omega.push(r / dt);
    }
    omega.push(omega[m - 2]);
    // Goal error at every sample, in rotation-vector form.
    let mut goal_err: Vec<Vector3<f64>> = Vec::with_capacity(m);
    for q in &quats {
        goal_err.push((qg * q.conjugate()).log()? * 2.0);
    }

    let mut weights_position = Vec::with_capacity(3);
    let mut weights_orientation = Vec::with_capacity(3);
    let mut weights_stiffness = Vec::with_capacity(6);

    for a in 0..3 {
        let series: Vec<f64> = positions.iter().map(|p| p[a]).collect();
        let vel = differentiate(&series, dt);
        let acc = differentiate2(&series, dt);
        let targets: Vec<f64> = (0..m)
            .map(|j| {
                (tau * tau * acc[j]
                    - gains.alpha_p * (gains.beta_p * (pg[a] - series[j]) - tau * vel[j]))
                    / g_p[a]
            })
            .collect();
        weights_position.push(learn_weights(&basis, &phases, &targets));
    }

    for a in 0..3 {
        let w_series: Vec<f64> = omega.iter().map(|o| o[a]).collect();
        let w_dot = differentiate(&w_series, dt);
        let targets: Vec<f64> = (0..m)
            .map(|j| {
                (tau * tau * w_dot[j]
                    - gains.alpha_q * (gains.beta_q * goal_err[j][a] - tau * w_series[j]))
                    / g_q[a]
            })
            .collect();
        weights_orientation.push(learn_weights(&basis, &phases, &targets));
    }

    for a in 0..6 {
        let series: Vec<f64> = stiffness.iter().map(|k| k[a]).collect();
        let vel = differentiate(&series, dt);
        let acc = differentiate2(&series, dt);
        let targets: Vec<f64> = (0..m)
            .map(|j| {
                (tau * tau * acc[j]
                    - gains.alpha_k * (gains.beta_k * (kg[a] - series[j]) - tau * vel[j]))
                    / g_k[a]
            })
            .collect();
        weights_stiffness.push(learn_weights(&basis, &phases, &targets));
    }

    let start_rate_position = Vector3::from_iterator((0..3).map(|a| {
        let series: Vec<f64> = positions.iter().map(|p| p[a]).collect();
        tau * differentiate(&series, dt)[0]
    }));
    let start_rate_stiffness = Vector6::from_iterator((0..6).map(|a| {
        let series: Vec<f64> = stiffness.iter().map(|k| k[a]).collect();
        tau * differentiate(&series, dt)[0]
    }));
    let start_rate_orientation = omega[0] * tau;

    Ok(DmpModel {
        gains: *gains,
        tau,
        basis,
        weights_position,
        weights_orientation,
        weights_stiffness,
        start_position: p0,
        goal_position: pg,
        start_orientation: q0,
        goal_orientation: qg,
        start_stiffness: k0,
        goal_stiffness: kg,
        start_rate_position,
        start_rate_orientation,
        start_rate_stiffness,
        bounds: *bounds,
    })
}

/// Integrates the primitive forward with explicit Euler steps (geometric
/// steps on the sphere for orientation), producing rows at `t = 0, dt, ...`
/// up to the (possibly overridden) duration.
pub fn rollout(model: &DmpModel, dt: f64, goals: Option<&GoalOverride>) -> Result<Trajectory> {
    model.gains.validate()?;
    let duration = goals.and_then(|g| g.tau).unwrap_or(model.tau);
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Validation(format!(
            "duration must be positive and finite, got {duration}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= duration) {
        return Err(Error::Validation(format!(
            "step must satisfy 0 < dt <= duration, got {dt}"
        )));
    }
    let p_g = goals.and_then(|g| g.position).unwrap_or(model.goal_position);
    let q_g = goals
        .and_then(|g| g.orientation)
        .unwrap_or(model.goal_orientation);
    let k_g = goals
        .and_then(|g| g.stiffness)
        .unwrap_or(model.goal_stiffness);
    if !model.bounds.contains(&k_g) {
        return Err(Error::Validation(format!(
            "stiffness goal {:?} violates bounds [{}, {}] / [{}, {}]",
            k_g.as_slice(),
            model.bounds.translational.min,
            model.bounds.translational.max,
            model.bounds.rotational.min,
            model.bounds.rotational.max,
        )));
    }

    let g_p = position_scale(&model.start_position, &p_g, "position");
    let g_q = orientation_scale(&model.start_orientation, &q_g)?;
    let g_k = stiffness_scale(&model.start_stiffness, &k_g);
    // The stored start rates belong to the span the model was fitted on.
    // Re-expressing them against an overridden goal span keeps a goal change
    // a pure per-axis rescale of the whole solution.
    let y0 = if goals.and_then(|g| g.position).is_some() {
        let g_fit = position_scale(&model.start_position, &model.goal_position, "position");
        model.start_rate_position.component_mul(&g_p).component_div(&g_fit)
    } else {
        model.start_rate_position
    };
    let eta0 = if goals.and_then(|g| g.orientation).is_some() {
        let g_fit = orientation_scale(&model.start_orientation, &model.goal_orientation)?;
        model
            .start_rate_orientation
            .component_mul(&g_q)
            .component_div(&g_fit)
    } else {
        model.start_rate_orientation
    };
    let z0 = if goals.and_then(|g| g.stiffness).is_some() {
        let g_fit = stiffness_scale(&model.start_stiffness, &model.goal_stiffness);
        model.start_rate_stiffness.component_mul(&g_k).component_div(&g_fit)
    } else {
        model.start_rate_stiffness
    };
    let canonical = CanonicalSystem::new(model.gains.alpha_x, duration)?;
    let gains = &model.gains;

    let steps = (duration / dt).round().max(1.0) as usize;
    let mut t_axis = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut quaternions = Vec::with_capacity(steps + 1);
    let mut stiffness = Vec::with_capacity(steps + 1);

    let mut p = model.start_position;
    let mut y = y0;
    let mut q = model.start_orientation;
    let mut eta = eta0;
    let mut k = model.start_stiffness;
    let mut z = z0;

    t_axis.push(0.0);
    positions.push(p);
    quaternions.push(q);
    stiffness.push(k);

    let s = model.basis.len();
    let mut psi = vec![0.0; s];
    for i in 0..steps {
        let t = i as f64 * dt;
        let x = canonical.phase(t);
        model.basis.activations_into(x, &mut psi);
        let den: f64 = psi.iter().sum();
        let gate = if den < 1e-300 { 0.0 } else { x / den };
        let force = |weights: &[f64]| -> f64 {
            weights
                .iter()
                .zip(&psi)
                .map(|(th, p)| th * p)
                .sum::<f64>()
                * gate
        };

        let f_p = Vector3::from_iterator(
            (0..3).map(|a| g_p[a] * force(&model.weights_position[a])),
        );
        let f_q = Vector3::from_iterator(
            (0..3).map(|a| g_q[a] * force(&model.weights_orientation[a])),
        );
        let f_k = Vector6::from_iterator(
            (0..6).map(|a| g_k[a] * force(&model.weights_stiffness[a])),
        );

        let e_q = (q_g * q.conjugate()).log()? * 2.0;

        let p_dot = y / duration;
        let y_dot = (gains.alpha_p * (gains.beta_p * (p_g - p) - y) + f_p) / duration;
        let k_dot = z / duration;
        let z_dot = (gains.alpha_k * (gains.beta_k * (k_g - k) - z) + f_k) / duration;
        let eta_dot = (gains.alpha_q * (gains.beta_q * e_q - eta) + f_q) / duration;

        // Orientation stays on the sphere: eta / duration is the
        // rotation-vector rate, and tangent steps carry half the rotation.
        let step_rot = UnitQuaternion::exp(&(eta * (dt / (2.0 * duration))));
        let (w, xq, yq, zq) = step_rot.product_raw(&q);
        let norm = (w * w + xq * xq + yq * yq + zq * zq).sqrt();
        if (norm - 1.0).abs() > NORM_DRIFT_TOL {
            return Err(Error::Integration(format!(
                "quaternion norm drifted to {norm} at t = {t}; step too large"
            )));
        }
        q = UnitQuaternion::new(w, xq, yq, zq)?;

        p += p_dot * dt;
        y += y_dot * dt;
        k += k_dot * dt;
        z += z_dot * dt;
        eta += eta_dot * dt;

        if !p.iter().all(|v| v.is_finite()) || !k.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration(format!(
                "state became non-finite at t = {t}"
            )));
        }

        t_axis.push((i + 1) as f64 * dt);
        positions.push(p);
        quaternions.push(q);
        stiffness.push(k);
    }

    Ok(Trajectory {
        t: t_axis,
        positions,
        quaternions,
        stiffness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn minjerk(u: f64) -> f64 {
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }

    /// Smooth reference used across the fitting tests: a curved position
    /// track, a growing tilt, and per-axis stiffness ramps, all with zero
    /// start/end rates.
    fn make_reference(m: usize, duration: f64) -> (TrajectoryDistribution, StiffnessProfile) {
        let axis = Vector3::new(0.2, 1.0, 0.1).normalize();
        let a = Vector3::new(0.4, -0.3, 0.35);
        let b = Vector3::new(0.55, 0.22, 0.2);
        let grid: Vec<f64> = (0..m)
            .map(|i| duration * i as f64 / (m - 1) as f64)
            .collect();
        let mut mean_positions = Vec::with_capacity(m);
        let mut mean_quaternions = Vec::with_capacity(m);
        let mut stddev = Vec::with_capacity(m);
        let mut stiffness = Vec::with_capacity(m);
        for i in 0..m {
            let u = i as f64 / (m - 1) as f64;
            let s = minjerk(u);
            let p = a + (b - a) * s + Vector3::new(0.0, 0.0, 0.06) * (std::f64::consts::PI * s).sin();
            mean_positions.push(p);
            let angle = 1.4 * s;
            mean_quaternions.push(UnitQuaternion::exp(&(axis * (angle / 2.0))));
            stddev.push(Vector6::repeat(0.01));
            let ramp = minjerk(u);
            let dip = (std::f64::consts::PI * s).sin();
            stiffness.push(Vector6::new(
                550.0 - 330.0 * dip,
                250.0 + 280.0 * ramp,
                500.0 - 250.0 * ramp,
                19.0 - 8.0 * dip,
                11.0 + 8.0 * ramp,
                18.0 - 7.0 * ramp,
            ));
        }
        (
            TrajectoryDistribution {
                grid: grid.clone(),
                mean_positions,
                mean_quaternions,
                stddev,
            },
            StiffnessProfile { grid, stiffness },
        )
    }

    fn position_extent(dist: &TrajectoryDistribution) -> f64 {
        (0..3)
            .map(|a| {
                let lo = dist
                    .mean_positions
                    .iter()
                    .map(|p| p[a])
                    .fold(f64::INFINITY, f64::min);
                let hi = dist
                    .mean_positions
                    .iter()
                    .map(|p| p[a])
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// RMSEs of a rollout against the fitting reference, comparing rollout
    /// rows at reference grid nodes (`stride` rollout steps per grid step).
    fn reproduction_errors(
        traj: &Trajectory,
        dist: &TrajectoryDistribution,
        profile: &StiffnessProfile,
        stride: usize,
    ) -> (f64, f64, f64) {
        let m = dist.grid.len();
        let mut pos_sq = 0.0;
        let mut ang_sq = 0.0;
        let mut k_ratio_sq = 0.0f64;
        let bounds = StiffnessBounds::default();
        for i in 0..m {
            let r = i * stride;
            pos_sq += (traj.positions[r] - dist.mean_positions[i]).norm_squared();
            let ang = traj.quaternions[r].rotation_angle_to(&dist.mean_quaternions[i]);
            ang_sq += ang * ang;
            for a in 0..6 {
                let err = (traj.stiffness[r][a] - profile.stiffness[i][a])
                    / bounds.axis(a).range();
                k_ratio_sq += err * err;
            }
        }
        (
            (pos_sq / m as f64).sqrt(),
            (ang_sq / m as f64).sqrt(),
            (k_ratio_sq / (6.0 * m as f64)).sqrt(),
        )
    }

    #[test]
    fn phase_decays_from_one() {
        let c = CanonicalSystem::new(6.0, 2.0).unwrap();
        assert_relative_eq!(c.phase(0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.phase(2.0), (-6.0f64).exp(), epsilon = 1e-15);
        let mut prev = 1.0;
        for i in 1..100 {
            let x = c.phase(2.0 * i as f64 / 99.0);
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn basis_centers_decrease_and_peak_at_one() {
        let b = BasisSet::uniform_in_time(20, 6.0, 0.8).unwrap();
        assert_eq!(b.len(), 20);
        for w in b.centers.windows(2) {
            assert!(w[0] > w[1]);
        }
        for (s, &c) in b.centers.iter().enumerate() {
            let acts = b.activations(c);
            assert_relative_eq!(acts[s], 1.0, epsilon = 1e-15);
        }
        assert!(b.widths.iter().all(|h| *h > 0.0));
    }

    #[test]
    fn constant_weights_give_linear_forcing() {
        // With every weight equal to c the normalized sum collapses and
        // f(x) = c * x exactly.
        let b = BasisSet::uniform_in_time(15, 6.0, 0.8).unwrap();
        let weights = vec![2.5; 15];
        for &x in &[1.0, 0.7, 0.3, 0.05, 0.0025] {
            assert_relative_eq!(forcing_term(&b, &weights, x), 2.5 * x, max_relative = 1e-12);
        }
    }

    #[test]
    fn imitation_reproduces_the_reference() {
        let (dist, profile) = make_reference(501, 2.0);
        let model = fit(&dist, &profile, &Gains::default(), 30, &StiffnessBounds::default())
            .unwrap();
        // Reference step is 2/500 = 0.004 s; roll out 40x finer so the
        // explicit-Euler error stays well below the fit residual being judged.
        let traj = rollout(&model, 1e-4, None).unwrap();
        let (pos_rmse, ang_rmse, k_rmse) = reproduction_errors(&traj, &dist, &profile, 40);
        let extent = position_extent(&dist);
        assert!(
            pos_rmse < 0.01 * extent,
            "position RMSE {pos_rmse} vs extent {extent}"
        );
        assert!(ang_rmse < 0.02, "orientation RMSE {ang_rmse} rad");
        assert!(k_rmse < 0.01, "stiffness RMSE ratio {k_rmse}");
        // Endpoint convergence.
        let last = traj.positions.last().unwrap();
        assert!((last - model.goal_position).norm() < 1e-3);
        assert!(
            traj.quaternions
                .last()
                .unwrap()
                .rotation_angle_to(&model.goal_orientation)
                < 0.01
        );
    }

    #[test]
    fn zero_forcing_never_overshoots() {
        let s = 5;
        let model = DmpModel {
            gains: Gains::default(),
            tau: 1.5,
            basis: BasisSet::uniform_in_time(s, 6.0, 0.8).unwrap(),
            weights_position: vec![vec![0.0; s]; 3],
            weights_orientation: vec![vec![0.0; s]; 3],
            weights_stiffness: vec![vec![0.0; s]; 6],
            start_position: Vector3::zeros(),
            goal_position: Vector3::new(0.3, -0.2, 0.5),
            start_orientation: UnitQuaternion::IDENTITY,
            goal_orientation: UnitQuaternion::exp(&Vector3::new(0.1, 0.55, -0.2)),
            start_stiffness: Vector6::repeat(250.0),
            goal_stiffness: Vector6::new(500.0, 400.0, 300.0, 250.1, 251.0, 249.9),
            start_rate_position: Vector3::zeros(),
            start_rate_orientation: Vector3::zeros(),
            start_rate_stiffness: Vector6::zeros(),
            bounds: StiffnessBounds {
                translational: AxisBounds_250(),
                rotational: AxisBounds_250(),
            },
        };
        let traj = rollout(&model, 1e-3, None).unwrap();
        for a in 0..3 {
            let span = model.goal_position[a] - model.start_position[a];
            for p in &traj.positions {
                let past_goal = (p[a] - model.goal_position[a]) * span.signum();
                assert!(
                    past_goal <= 1e-3 * span.abs(),
                    "axis {a} overshoots goal by {past_goal}"
                );
            }
        }
        for a in 0..6 {
            let span = model.goal_stiffness[a] - model.start_stiffness[a];
            if span.abs() < 1.0 {
                continue;
            }
            for k in &traj.stiffness {
                let past_goal = (k[a] - model.goal_stiffness[a]) * span.signum();
                assert!(past_goal <= 1e-3 * span.abs());
            }
        }
        // Orientation: the geodesic coordinate toward the goal shrinks
        // without swinging past (projection on the initial error direction
        // never goes negative beyond 0.1% of the initial error).
        let e0 = (model.goal_orientation * model.start_orientation.conjugate())
            .log()
            .unwrap()
            * 2.0;
        let dir = e0.normalize();
        for q in &traj.quaternions {
            let e = (model.goal_orientation * q.conjugate()).log().unwrap() * 2.0;
            assert!(e.dot(&dir) >= -1e-3 * e0.norm());
        }
        // And it does converge.
        assert!(
            traj.quaternions
                .last()
                .unwrap()
                .rotation_angle_to(&model.goal_orientation)
                < 1e-3
        );
    }

    // Wide bounds helper for hand-built models.
    #[allow(non_snake_case)]
    fn AxisBounds_250() -> crate::stiffness::AxisBounds {
        crate::stiffness::AxisBounds::new(1.0, 1e4).unwrap()
    }

    #[test]
    fn moved_goal_rescales_the_same_shape() {
        let (dist, profile) = make_reference(301, 2.0);
        let model = fit(&dist, &profile, &Gains::default(), 30, &StiffnessBounds::default())
            .unwrap();
        let base = rollout(&model, 1e-3, None).unwrap();
        let shift = Vector3::new(0.15, -0.15, 0.1);
        let over = GoalOverride {
            position: Some(model.goal_position + shift),
            ..Default::default()
        };
        let moved = rollout(&model, 1e-3, Some(&over)).unwrap();
        // Normalized per-axis profiles must match: the scaling matrix turns a
        // goal change into a pure affine re-scale of the solution.
        for a in 0..3 {
            let g_a = model.goal_position[a] - model.start_position[a];
            let g_b = model.goal_position[a] + shift[a] - model.start_position[a];
            for i in 0..base.len() {
                let ca = (base.positions[i][a] - model.start_position[a]) / g_a;
                let cb = (moved.positions[i][a] - model.start_position[a]) / g_b;
                assert!(
                    (ca - cb).abs() < 1e-9,
                    "normalized shapes diverge at row {i} axis {a}: {ca} vs {cb}"
                );
            }
        }
        let end = moved.positions.last().unwrap();
        assert!((end - (model.goal_position + shift)).norm() < 1e-3);
    }

    #[test]
    fn doubling_duration_keeps_the_geometry() {
        let (dist, profile) = make_reference(201, 2.0);
        let model = fit(&dist, &profile, &Gains::default(), 30, &StiffnessBounds::default())
            .unwrap();
        let dt = 2e-4;
        let fast = rollout(&model, dt, None).unwrap();
        let slow = rollout(
            &model,
            dt,
            Some(&GoalOverride {
                tau: Some(4.0),
                ..Default::default()
            }),
        )
        .unwrap();
        // Row i of the fast run and row 2i of the slow run share the same
        // phase, so they must visit the same point up to integration error.
        let extent = position_extent(&dist);
        for i in (0..fast.len()).step_by(50) {
            let d = (fast.positions[i] - slow.positions[2 * i]).norm();
            assert!(
                d < 5e-3 * extent,
                "geometry differs by {d} at row {i} (extent {extent})"
            );
        }
    }

    #[test]
    fn more_basis_functions_fit_better() {
        let (dist, profile) = make_reference(201, 2.0);
        let mut rmse = Vec::new();
        for s in [10, 30, 100] {
            let model =
                fit(&dist, &profile, &Gains::default(), s, &StiffnessBounds::default()).unwrap();
            // Reference step is 0.01 s; integrate 100x finer so the
            // integration floor sits well below the regression residual.
            let traj = rollout(&model, 1e-4, None).unwrap();
            let (p, _, _) = reproduction_errors(&traj, &dist, &profile, 100);
            rmse.push(p);
        }
        assert!(
            rmse[0] > rmse[1] && rmse[1] > rmse[2],
            "expected shrinking error, got {rmse:?}"
        );
    }

    #[test]
    fn flat_axis_stays_flat() {
        // The z position never moves: its scaling entry degenerates to 1 and
        // the learned forcing must hold the axis constant.
        let (mut dist, profile) = make_reference(201, 2.0);
        for p in dist.mean_positions.iter_mut() {
            p.z = 0.35;
        }
        let model = fit(&dist, &profile, &Gains::default(), 30, &StiffnessBounds::default())
            .unwrap();
        let traj = rollout(&model, 1e-3, None).unwrap();
        for p in &traj.positions {
            assert!((p.z - 0.35).abs() < 1e-9, "z drifted to {}", p.z);
        }
    }

    #[test]
    fn out_of_bounds_stiffness_goal_is_rejected() {
        let (dist, profile) = make_reference(101, 2.0);
        let model = fit(&dist, &profile, &Gains::default(), 20, &StiffnessBounds::default())
            .unwrap();
        let over = GoalOverride {
            stiffness: Some(Vector6::repeat(600.0)),
            ..Default::default()
        };
        assert!(matches!(
            rollout(&model, 1e-3, Some(&over)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rollout_grid_is_exact_and_uniform() {
        let (dist, profile) = make_reference(101, 2.0);
        let model = fit(&dist, &profile, &Gains::default(), 20, &StiffnessBounds::default())
            .unwrap();
        let traj = rollout(
            &model,
            0.25,
            Some(&GoalOverride {
                tau: Some(1.0),
                ..Default::default()
            }),
        )
        .unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj.t, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
