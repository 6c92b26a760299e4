//! Deterministic synthetic demonstration sets.
//!
//! Models a pouring-style motion: reach across the workspace with a small
//! lift, then tilt about a fixed axis toward the end. Each demonstration gets
//! its own clock (duration, offset, and sample count vary) and smooth random
//! deviations from the nominal motion. The deviations are standardized across
//! the set so that at every instant the across-demo standard deviation equals
//! a chosen envelope exactly, per axis — the spread profile the stiffness
//! mapping reads off is designed, not merely expected.

use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::{Demonstration, Sample};
use crate::quaternion::UnitQuaternion;

/// How the across-demonstration spread evolves over normalized time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceShape {
    /// Zero spread at both ends, peak in the middle (demonstrations agree on
    /// start and goal, diverge in between).
    Pinched,
    /// Large spread at the start, smallest around 55% of the way through,
    /// then recovering to a moderate plateau that holds through the end.
    /// The plateau keeps the end-of-motion stiffness well inside the bounds
    /// (which matters when stiffness goals get rescaled upward) and gives
    /// encoders a quiet tail to land on.
    Dipped,
}

impl VarianceShape {
    fn envelope(&self, u: f64) -> f64 {
        fn smoothstep(v: f64) -> f64 {
            let v = v.clamp(0.0, 1.0);
            v * v * (3.0 - 2.0 * v)
        }
        match self {
            VarianceShape::Pinched => (std::f64::consts::PI * u).sin(),
            VarianceShape::Dipped => {
                1.0 - 0.75 * smoothstep(u / 0.55) + 0.45 * smoothstep((u - 0.55) / 0.33)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub demo_count: usize,
    /// Nominal duration, seconds; per-demo durations vary around it.
    pub duration: f64,
    pub seed: u64,
    pub shape: VarianceShape,
    /// Scale of the positional deviations, meters.
    pub position_noise: f64,
    /// Scale of the orientational deviations, tangent-space radians.
    pub orientation_noise: f64,
    pub min_samples: usize,
    pub max_samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            demo_count: 8,
            duration: 11.0,
            seed: 7,
            shape: VarianceShape::Pinched,
            position_noise: 0.012,
            orientation_noise: 0.035,
            min_samples: 380,
            max_samples: 620,
        }
    }
}

fn minjerk(u: f64) -> f64 {
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

fn nominal_pose(u: f64) -> (Vector3<f64>, Vector3<f64>) {
    let a = Vector3::new(0.4, -0.3, 0.35);
    let b = Vector3::new(0.55, 0.25, 0.22);
    let s = minjerk(u);
    let position =
        a + (b - a) * s + Vector3::new(0.0, 0.0, 0.08) * (std::f64::consts::PI * s).sin();

    // Tilt toward the end of the motion, plus a small secondary sway.
    let tilt_axis = Vector3::new(0.15, 1.0, 0.1).normalize();
    let sway_axis = Vector3::new(1.0, 0.0, -0.2).normalize();
    let w = ((u - 0.55) / 0.45).clamp(0.0, 1.0);
    let tilt = 1.75 * w * w * (3.0 - 2.0 * w);
    let sway = 0.06 * (2.0 * std::f64::consts::PI * u).sin();
    let tangent = tilt_axis * (tilt / 2.0) + sway_axis * (sway / 2.0);
    (position, tangent)
}

/// Four smooth basis functions whose random mixture stays nonzero at both
/// ends (the envelope decides what actually survives at the ends).
fn basis_mix(coeff: &[f64; 4], u: f64) -> f64 {
    coeff[0]
        + coeff[1] * (std::f64::consts::PI * u).cos()
        + coeff[2] * (std::f64::consts::PI * u).sin()
        + coeff[3] * (2.0 * std::f64::consts::PI * u).sin()
}

/// One axis' deviation fields for the whole demonstration set, standardized
/// so that at every `u` the across-demo mean is exactly zero and the
/// across-demo sample standard deviation is exactly one.
struct StandardizedFields {
    /// Per-demo mixture coefficients with the across-demo mean removed.
    centered: Vec<[f64; 4]>,
}

impl StandardizedFields {
    fn new(raw: Vec<[f64; 4]>) -> Result<Self> {
        let d_count = raw.len();
        let mut mean = [0.0f64; 4];
        for c in &raw {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v / d_count as f64;
            }
        }
        let centered: Vec<[f64; 4]> = raw
            .iter()
            .map(|c| {
                let mut out = [0.0; 4];
                for i in 0..4 {
                    out[i] = c[i] - mean[i];
                }
                out
            })
            .collect();

        // The across-demo variance at parameter u is B(u)^T M B(u) with
        // B(u) = (1, cos(pi u), sin(pi u), sin(2 pi u)) and M the scatter of
        // the centered coefficients; since |B|^2 >= 2 everywhere, a positive
        // smallest eigenvalue of M keeps the normalization away from zero for
        // every u at once.
        let mut scatter = Matrix4::<f64>::zeros();
        for c in &centered {
            for i in 0..4 {
                for j in 0..4 {
                    scatter[(i, j)] += c[i] * c[j] / (d_count - 1) as f64;
                }
            }
        }
        let eigen = scatter.symmetric_eigenvalues();
        let floor = 1e-10 * scatter.trace().max(1e-300);
        if eigen.min() < floor {
            return Err(Error::DegenerateData(
                "demonstration deviations are rank-deficient; draw more demonstrations or change the seed"
                    .to_string(),
            ));
        }
        Ok(Self { centered })
    }

    /// Exact across-demo sample standard deviation of the centered mixtures
    /// at parameter `u`.
    fn spread(&self, u: f64) -> f64 {
        let d_count = self.centered.len();
        let sum: f64 = self
            .centered
            .iter()
            .map(|c| basis_mix(c, u).powi(2))
            .sum();
        (sum / (d_count - 1) as f64).sqrt()
    }

    /// Demo `d`'s field value at `u`, standardized to unit across-demo spread.
    fn value(&self, d: usize, u: f64) -> f64 {
        basis_mix(&self.centered[d], u) / self.spread(u)
    }
}

/// Generates a deterministic demonstration set: same config, same bytes.
///
/// At any fixed fraction of the motion the across-demo sample standard
/// deviation of every position axis (meters) and every orientation axis
/// (tangent-space radians) equals the envelope value there times the
/// configured noise scale — exactly, not just in expectation — so learned
/// stiffness profiles inherit the envelope's shape.
pub fn pouring_demos(config: &SyntheticConfig) -> Result<Vec<Demonstration>> {
    if config.demo_count < 5 {
        return Err(Error::Validation(format!(
            "need at least 5 demonstrations to standardize the across-demo spread, got {}",
            config.demo_count
        )));
    }

    struct Plan {
        duration: f64,
        t_start: f64,
        samples: usize,
    }
    let mut plans = Vec::with_capacity(config.demo_count);
    let mut pos_raw: [Vec<[f64; 4]>; 3] = Default::default();
    let mut ori_raw: [Vec<[f64; 4]>; 3] = Default::default();
    for d in 0..config.demo_count {
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(d as u64));
        plans.push(Plan {
            duration: config.duration * (0.85 + 0.3 * rng.gen::<f64>()),
            t_start: 3.0 * rng.gen::<f64>(),
            samples: rng.gen_range(config.min_samples..=config.max_samples),
        });
        let mut draw = || -> [f64; 4] {
            let mut c = [0.0; 4];
            for (i, damp) in [1.0, 0.7, 0.7, 0.4].iter().enumerate() {
                c[i] = (rng.gen::<f64>() * 2.0 - 1.0) * damp;
            }
            c
        };
        for axis in &mut pos_raw {
            axis.push(draw());
        }
        for axis in &mut ori_raw {
            axis.push(draw());
        }
    }
    let pos_fields = pos_raw
        .into_iter()
        .map(StandardizedFields::new)
        .collect::<Result<Vec<_>>>()?;
    let ori_fields = ori_raw
        .into_iter()
        .map(StandardizedFields::new)
        .collect::<Result<Vec<_>>>()?;

    let mut demos = Vec::with_capacity(config.demo_count);
    for (d, plan) in plans.iter().enumerate() {
        let rows: Vec<Sample> = (0..plan.samples)
            .map(|i| {
                let u = i as f64 / (plan.samples - 1) as f64;
                let env = config.shape.envelope(u);
                let (p_nom, tangent_nom) = nominal_pose(u);
                let dp = Vector3::from_iterator(
                    pos_fields
                        .iter()
                        .map(|f| env * config.position_noise * f.value(d, u)),
                );
                let du = Vector3::from_iterator(
                    ori_fields
                        .iter()
                        .map(|f| env * config.orientation_noise * f.value(d, u)),
                );
                Sample {
                    t: plan.t_start + plan.duration * u,
                    position: p_nom + dp,
                    // Deviations are added in the tangent space the learner
                    // reads, so its per-axis spread is the envelope exactly.
                    orientation: UnitQuaternion::exp(&(tangent_nom + du)),
                }
            })
            .collect();
        demos.push(Demonstration::new(rows)?);
    }
    Ok(demos)
}
