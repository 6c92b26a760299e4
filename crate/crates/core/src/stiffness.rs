//! Variance-driven stiffness profiles.
//!
//! Where demonstrations agree (low spread) the robot should be stiff; where
//! they disagree it should give. Each axis is mapped independently through a
//! quadratic that pins the series' own extreme spreads to the stiffness
//! bounds: the minimum-spread instant gets `k_max`, the maximum-spread instant
//! gets `k_min`.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::TrajectoryDistribution;

/// Spread ranges narrower than this count as "all demonstrations agree
/// everywhere" and cannot drive a profile.
pub const SPREAD_RANGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds {
    pub min: f64,
    pub max: f64,
}

impl AxisBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && 0.0 < self.min && self.min < self.max)
        {
            return Err(Error::Validation(format!(
                "stiffness bounds need 0 < min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, k: f64) -> bool {
        self.min <= k && k <= self.max
    }
}

/// Separate bounds for the three translational axes (N/m) and the three
/// rotational axes (N·m/rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessBounds {
    pub translational: AxisBounds,
    pub rotational: AxisBounds,
}

impl Default for StiffnessBounds {
    fn default() -> Self {
        Self {
            translational: AxisBounds {
                min: 200.0,
                max: 550.0,
            },
            rotational: AxisBounds {
                min: 10.0,
                max: 20.0,
            },
        }
    }
}

impl StiffnessBounds {
    pub fn validate(&self) -> Result<()> {
        self.translational.validate()?;
        self.rotational.validate()
    }

    /// Bounds governing axis `axis` in the usual (x, y, z, rx, ry, rz) order.
    pub fn axis(&self, axis: usize) -> &AxisBounds {
        if axis < 3 {
            &self.translational
        } else {
            &self.rotational
        }
    }

    pub fn min_vector(&self) -> Vector6<f64> {
        Vector6::from_iterator((0..6).map(|a| self.axis(a).min))
    }

    pub fn max_vector(&self) -> Vector6<f64> {
        Vector6::from_iterator((0..6).map(|a| self.axis(a).max))
    }

    pub fn contains(&self, k: &Vector6<f64>) -> bool {
        (0..6).all(|a| self.axis(a).contains(k[a]))
    }
}

/// A per-axis stiffness trajectory on a time grid.
#[derive(Debug, Clone)]
pub struct StiffnessProfile {
    pub grid: Vec<f64>,
    pub stiffness: Vec<Vector6<f64>>,
}

impl StiffnessProfile {
    pub fn start(&self) -> Vector6<f64> {
        self.stiffness[0]
    }

    pub fn goal(&self) -> Vector6<f64> {
        self.stiffness[self.stiffness.len() - 1]
    }
}

/// Maps one axis' spread series to stiffness:
///
/// `k_i = a (d_i - d_max)^2 + k_min`, with `a = (k_max - k_min) / (d_min - d_max)^2`,
///
/// so the largest spread lands exactly on `k_min`, the smallest exactly on
/// `k_max`, and the map is invariant to affine rescaling of the spread.
/// A (near-)constant series has no usable contrast and is rejected.
pub fn stiffness_indicator(spread: &[f64], bounds: &AxisBounds) -> Result<Vec<f64>> {
    bounds.validate()?;
    if spread.is_empty() {
        return Err(Error::Validation("empty spread series".to_string()));
    }
    if spread.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Validation(
            "spread values must be finite and non-negative".to_string(),
        ));
    }
    let d_min = spread.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_max = spread.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if d_max - d_min < SPREAD_RANGE_EPS {
        return Err(Error::DegenerateVariance(format!(
            "spread range {:.3e} is below {SPREAD_RANGE_EPS}; demonstrations agree equally \
             everywhere on this axis",
            d_max - d_min
        )));
    }
    let a = bounds.range() / ((d_min - d_max) * (d_min - d_max));
    Ok(spread
        .iter()
        .map(|d| {
            let k = a * (d - d_max) * (d - d_max) + bounds.min;
            k.clamp(bounds.min, bounds.max)
        })
        .collect())
}

/// Centered moving average with windows shrunk symmetrically at the edges.
/// `window <= 1` is the identity.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || series.len() < 2 {
        return series.to_vec();
    }
    let r = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(series.len() - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Builds the six per-axis profiles from a trajectory distribution.
///
/// Never fails: an axis whose spread carries no contrast is filled with the
/// midpoint of its bounds and reported back (and logged prominently), since
/// uniformly agreeing demonstrations simply express no stiffness preference.
/// Returns the profile and the indices of the axes that were filled in.
pub fn build_profiles(
    distribution: &TrajectoryDistribution,
    bounds: &StiffnessBounds,
    smoothing_window: usize,
) -> Result<(StiffnessProfile, Vec<usize>)> {
    bounds.validate()?;
    let m = distribution.grid.len();
    if m == 0 {
        return Err(Error::Validation("empty trajectory distribution".to_string()));
    }
    let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(6);
    let mut degenerate = Vec::new();
    static AXIS_NAMES: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];
    for a in 0..6 {
        let series: Vec<f64> = distribution.stddev.iter().map(|s| s[a]).collect();
        let smoothed = moving_average(&series, smoothing_window);
        match stiffness_indicator(&smoothed, bounds.axis(a)) {
            Ok(k) => per_axis.push(k),
            Err(Error::DegenerateVariance(msg)) => {
                log::warn!(
                    "axis {}: {msg}; holding stiffness at the midpoint {}",
                    AXIS_NAMES[a],
                    bounds.axis(a).midpoint()
                );
                degenerate.push(a);
                per_axis.push(vec![bounds.axis(a).midpoint(); m]);
            }
            Err(e) => return Err(e),
        }
    }
    let stiffness = (0..m)
        .map(|i| Vector6::from_iterator((0..6).map(|a| per_axis[a][i])))
        .collect();
    Ok((
        StiffnessProfile {
            grid: distribution.grid.clone(),
            stiffness,
        },
        degenerate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn typical_translational() -> AxisBounds {
        AxisBounds::new(200.0, 550.0).unwrap()
    }

    #[test]
    fn hand_computed_quadratic_values() {
        // spread [0, 1, 2] with bounds [1, 9]: a = 8 / 4 = 2, so
        // k = [2*4+1, 2*1+1, 2*0+1] = [9, 3, 1].
        let bounds = AxisBounds::new(1.0, 9.0).unwrap();
        let k = stiffness_indicator(&[0.0, 1.0, 2.0], &bounds).unwrap();
        assert_relative_eq!(k[0], 9.0, epsilon = 1e-12);
        assert_relative_eq!(k[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(k[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn extremes_land_exactly_on_bounds() {
        let spread = [0.02, 0.005, 0.013, 0.0049, 0.031, 0.008];
        let bounds = typical_translational();
        let k = stiffness_indicator(&spread, &bounds).unwrap();
        let i_min = 3; // smallest spread
        let i_max = 4; // largest spread
        assert_relative_eq!(k[i_min], 550.0, epsilon = 1e-9);
        assert_relative_eq!(k[i_max], 200.0, epsilon = 1e-9);
        for v in &k {
            assert!((200.0..=550.0).contains(v));
        }
    }

    #[test]
    fn larger_spread_never_gets_more_stiffness() {
        let spread = [0.4, 0.1, 0.25, 0.9, 0.33, 0.1];
        let k = stiffness_indicator(&spread, &typical_translational()).unwrap();
        for i in 0..spread.len() {
            for j in 0..spread.len() {
                if spread[i] < spread[j] {
                    assert!(
                        k[i] >= k[j],
                        "spread {} < {} but k {} < {}",
                        spread[i],
                        spread[j],
                        k[i],
                        k[j]
                    );
                }
            }
        }
    }

    #[test]
    fn constant_spread_is_degenerate() {
        let spread = [0.01; 5];
        assert!(matches!(
            stiffness_indicator(&spread, &typical_translational()),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn moving_average_hand_check() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let out = moving_average(&s, 3);
        assert_eq!(out, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
        assert_eq!(moving_average(&s, 1), s.to_vec());
    }

    #[test]
    fn degenerate_axes_fall_back_to_midpoint() {
        use crate::gmm::TrajectoryDistribution;
        use crate::quaternion::UnitQuaternion;
        use nalgebra::Vector3;
        let m = 20;
        let dist = TrajectoryDistribution {
            grid: (0..m).map(|i| i as f64).collect(),
            mean_positions: vec![Vector3::zeros(); m],
            mean_quaternions: vec![UnitQuaternion::IDENTITY; m],
            stddev: (0..m)
                .map(|i| {
                    let u = i as f64 / (m - 1) as f64;
                    // Axis 1 is exactly constant; the rest vary.
                    Vector6::new(
                        0.01 + 0.02 * u,
                        0.005,
                        0.01 * (1.0 - u),
                        0.001 + 0.002 * u,
                        0.002 + 0.001 * u,
                        0.003 * (0.5 - u).abs(),
                    )
                })
                .collect(),
        };
        let bounds = StiffnessBounds::default();
        let (profile, degenerate) = build_profiles(&dist, &bounds, 0).unwrap();
        assert_eq!(degenerate, vec![1]);
        for row in &profile.stiffness {
            assert_relative_eq!(row[1], 375.0, epsilon = 1e-12);
            assert!(bounds.contains(row));
        }
    }

    proptest! {
        #[test]
        fn affine_rescaling_leaves_profile_unchanged(
            base in proptest::collection::vec(0.0f64..1.0, 3..40),
            scale in 0.01f64..100.0,
            offset in 0.0f64..10.0,
        ) {
            let d_min = base.iter().cloned().fold(f64::INFINITY, f64::min);
            let d_max = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(d_max - d_min > 1e-6);
            let bounds = typical_translational();
            let k1 = stiffness_indicator(&base, &bounds).unwrap();
            let shifted: Vec<f64> = base.iter().map(|d| scale * d + offset).collect();
            let k2 = stiffness_indicator(&shifted, &bounds).unwrap();
            for (a, b) in k1.iter().zip(&k2) {
                prop_assert!((a - b).abs() < 1e-9 * bounds.max, "{a} vs {b}");
            }
        }

        #[test]
        fn output_always_within_bounds(
            spread in proptest::collection::vec(0.0f64..5.0, 2..50),
            lo in 1.0f64..100.0,
            range in 1.0f64..500.0,
        ) {
            let d_min = spread.iter().cloned().fold(f64::INFINITY, f64::min);
            let d_max = spread.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(d_max - d_min > 1e-9);
            let bounds = AxisBounds::new(lo, lo + range).unwrap();
            let k = stiffness_indicator(&spread, &bounds).unwrap();
            for v in &k {
                prop_assert!(bounds.contains(*v));
            }
        }
    }
}
