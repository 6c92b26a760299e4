//! Skill bundles: everything learned from one demonstration set, stored as a
//! single JSON document with a stable field layout.
//!
//! The on-disk structs mirror the runtime types with plain arrays so the
//! schema stays explicit and diff-friendly; conversions validate on the way
//! back in. Serialization is deterministic: the same inputs and configuration
//! produce byte-identical files.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dmp::{BasisSet, DmpModel, Gains};
use crate::error::{Error, Result};
use crate::gmm::{GmmModel, TrajectoryDistribution};
use crate::quaternion::UnitQuaternion;
use crate::stiffness::{StiffnessBounds, StiffnessProfile};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Where the per-axis spread driving the stiffness profile comes from:
/// regression through the mixture, or the raw across-demonstration sample
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceSource {
    Gmr,
    Empirical,
}

/// Mixture layout: one joint 7-D model over position and orientation, or two
/// separate 4-D models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelLayout {
    Joint,
    Separate,
}

/// Everything that shapes learning. Hashing this (see [`config_hash`]) gives
/// bundles a provenance fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Common duration all demonstrations are aligned to, seconds.
    pub t_scale: f64,
    /// Grid samples after alignment.
    pub samples: usize,
    /// Mixture components.
    pub components: usize,
    /// Basis functions per forcing dimension.
    pub basis_count: usize,
    pub seed: u64,
    pub em_max_iter: usize,
    pub em_tol: f64,
    /// Moving-average window applied to the spread series; 0/1 disables.
    pub smoothing_window: usize,
    pub variance_source: VarianceSource,
    pub model_layout: ModelLayout,
    pub bounds: StiffnessBounds,
    pub gains: Gains,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_scale: 11.0,
            samples: 500,
            components: 6,
            basis_count: 30,
            seed: 0,
            em_max_iter: 200,
            em_tol: 1e-8,
            smoothing_window: 0,
            variance_source: VarianceSource::Gmr,
            model_layout: ModelLayout::Joint,
            bounds: StiffnessBounds::default(),
            gains: Gains::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_scale.is_finite() && self.t_scale > 0.0) {
            return Err(Error::Validation(format!(
                "alignment duration must be positive, got {}",
                self.t_scale
            )));
        }
        if self.samples < 4 {
            return Err(Error::Validation(format!(
                "need at least 4 grid samples, got {}",
                self.samples
            )));
        }
        if self.components == 0 {
            return Err(Error::Validation("need at least one mixture component".to_string()));
        }
        if self.basis_count < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 basis functions, got {}",
                self.basis_count
            )));
        }
        if !(self.em_tol > 0.0) || self.em_max_iter == 0 {
            return Err(Error::Validation(
                "EM tolerance must be positive and max_iter nonzero".to_string(),
            ));
        }
        self.bounds.validate()?;
        self.gains.validate()
    }
}

/// SHA-256 over the canonical JSON encoding of the configuration.
pub fn config_hash(config: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModelData {
    pub dim: usize,
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim * dim` entries per component.
    pub covariances: Vec<Vec<f64>>,
}

impl From<&GmmModel> for GmmModelData {
    fn from(model: &GmmModel) -> Self {
        Self {
            dim: model.dim(),
            priors: model.priors().to_vec(),
            means: model.means().iter().map(|m| m.as_slice().to_vec()).collect(),
            covariances: model
                .covariances()
                .iter()
                .map(|c| {
                    // nalgebra stores column-major; emit row-major for
                    // readability. Covariances are symmetric, but stay exact.
                    let d = c.nrows();
                    let mut out = Vec::with_capacity(d * d);
                    for r in 0..d {
                        for col in 0..d {
                            out.push(c[(r, col)]);
                        }
                    }
                    out
                })
                .collect(),
        }
    }
}

impl GmmModelData {
    pub fn to_model(&self) -> Result<GmmModel> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Validation("mixture dimension is zero".to_string()));
        }
        let means = self
            .means
            .iter()
            .map(|m| {
                if m.len() != d {
                    return Err(Error::Validation("mixture mean length mismatch".to_string()));
                }
                Ok(DVector::from_column_slice(m))
            })
            .collect::<Result<Vec<_>>>()?;
        let covariances = self
            .covariances
            .iter()
            .map(|c| {
                if c.len() != d * d {
                    return Err(Error::Validation(
                        "mixture covariance length mismatch".to_string(),
                    ));
                }
                Ok(DMatrix::from_row_slice(d, d, c))
            })
            .collect::<Result<Vec<_>>>()?;
        GmmModel::new(self.priors.clone(), means, covariances)
    }
}

/// Mixture payload matching the configured layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum GmmData {
    Joint {
        model: GmmModelData,
    },
    Separate {
        position: GmmModelData,
        orientation: GmmModelData,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionData {
    pub grid: Vec<f64>,
    pub mean_positions: Vec<[f64; 3]>,
    /// `[w, x, y, z]`, unit norm.
    pub mean_quaternions: Vec<[f64; 4]>,
    pub stddev: Vec<[f64; 6]>,
}

impl From<&TrajectoryDistribution> for DistributionData {
    fn from(d: &TrajectoryDistribution) -> Self {
        Self {
            grid: d.grid.clone(),
            mean_positions: d.mean_positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            mean_quaternions: d
                .mean_quaternions
                .iter()
                .map(|q| [q.w, q.x, q.y, q.z])
                .collect(),
            stddev: d
                .stddev
                .iter()
                .map(|s| [s[0], s[1], s[2], s[3], s[4], s[5]])
                .collect(),
        }
    }
}

impl DistributionData {
    pub fn to_distribution(&self) -> Result<TrajectoryDistribution> {
        let m = self.grid.len();
        if self.mean_positions.len() != m
            || self.mean_quaternions.len() != m
            || self.stddev.len() != m
        {
            return Err(Error::Validation(
                "distribution track lengths disagree".to_string(),
            ));
        }
        Ok(TrajectoryDistribution {
            grid: self.grid.clone(),
            mean_positions: self
                .mean_positions
                .iter()
                .map(|p| Vector3::from_row_slice(p))
                .collect(),
            mean_quaternions: self
                .mean_quaternions
                .iter()
                .map(|q| UnitQuaternion::new(q[0], q[1], q[2], q[3]))
                .collect::<Result<Vec<_>>>()?,
            stddev: self
                .stddev
                .iter()
                .map(|s| Vector6::from_row_slice(s))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileData {
    pub grid: Vec<f64>,
    pub stiffness: Vec<[f64; 6]>,
}

impl From<&StiffnessProfile> for ProfileData {
    fn from(p: &StiffnessProfile) -> Self {
        Self {
            grid: p.grid.clone(),
            stiffness: p
                .stiffness
                .iter()
                .map(|k| [k[0], k[1], k[2], k[3], k[4], k[5]])
                .collect(),
        }
    }
}

impl ProfileData {
    pub fn to_profile(&self) -> Result<StiffnessProfile> {
        if self.grid.len() != self.stiffness.len() || self.grid.is_empty() {
            return Err(Error::Validation("stiffness track length mismatch".to_string()));
        }
        Ok(StiffnessProfile {
            grid: self.grid.clone(),
            stiffness: self
                .stiffness
                .iter()
                .map(|k| Vector6::from_row_slice(k))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmpModelData {
    pub gains: Gains,
    pub tau: f64,
    pub basis_centers: Vec<f64>,
    pub basis_widths: Vec<f64>,
    pub weights_position: Vec<Vec<f64>>,
    pub weights_orientation: Vec<Vec<f64>>,
    pub weights_stiffness: Vec<Vec<f64>>,
    pub start_position: [f64; 3],
    pub goal_position: [f64; 3],
    pub start_orientation: [f64; 4],
    pub goal_orientation: [f64; 4],
    pub start_stiffness: [f64; 6],
    pub goal_stiffness: [f64; 6],
    pub start_rate_position: [f64; 3],
    pub start_rate_orientation: [f64; 3],
    pub start_rate_stiffness: [f64; 6],
    pub bounds: StiffnessBounds,
}

impl From<&DmpModel> for DmpModelData {
    fn from(m: &DmpModel) -> Self {
        let v3 = |v: &Vector3<f64>| [v.x, v.y, v.z];
        let v6 = |v: &Vector6<f64>| [v[0], v[1], v[2], v[3], v[4], v[5]];
        let q4 = |q: &UnitQuaternion| [q.w, q.x, q.y, q.z];
        Self {
            gains: m.gains,
            tau: m.tau,
            basis_centers: m.basis.centers.clone(),
            basis_widths: m.basis.widths.clone(),
            weights_position: m.weights_position.clone(),
            weights_orientation: m.weights_orientation.clone(),
            weights_stiffness: m.weights_stiffness.clone(),
            start_position: v3(&m.start_position),
            goal_position: v3(&m.goal_position),
            start_orientation: q4(&m.start_orientation),
            goal_orientation: q4(&m.goal_orientation),
            start_stiffness: v6(&m.start_stiffness),
            goal_stiffness: v6(&m.goal_stiffness),
            start_rate_position: v3(&m.start_rate_position),
            start_rate_orientation: v3(&m.start_rate_orientation),
            start_rate_stiffness: v6(&m.start_rate_stiffness),
            bounds: m.bounds,
        }
    }
}

impl DmpModelData {
    pub fn to_model(&self) -> Result<DmpModel> {
        self.gains.validate()?;
        self.bounds.validate()?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Validation(format!(
                "model duration must be positive, got {}",
                self.tau
            )));
        }
        let s = self.basis_centers.len();
        if s < 2 || self.basis_widths.len() != s {
            return Err(Error::Validation("basis arrays are malformed".to_string()));
        }
        let check = |w: &[Vec<f64>], rows: usize, name: &str| -> Result<()> {
            if w.len() != rows || w.iter().any(|r| r.len() != s) {
                return Err(Error::Validation(format!(
                    "{name} weights must be {rows} x {s}"
                )));
            }
            Ok(())
        };
        check(&self.weights_position, 3, "position")?;
        check(&self.weights_orientation, 3, "orientation")?;
        check(&self.weights_stiffness, 6, "stiffness")?;
        Ok(DmpModel {
            gains: self.gains,
            tau: self.tau,
            basis: BasisSet {
                centers: self.basis_centers.clone(),
                widths: self.basis_widths.clone(),
            },
            weights_position: self.weights_position.clone(),
            weights_orientation: self.weights_orientation.clone(),
            weights_stiffness: self.weights_stiffness.clone(),
            start_position: Vector3::from_row_slice(&self.start_position),
            goal_position: Vector3::from_row_slice(&self.goal_position),
            start_orientation: UnitQuaternion::new(
                self.start_orientation[0],
                self.start_orientation[1],
                self.start_orientation[2],
                self.start_orientation[3],
            )?,
            goal_orientation: UnitQuaternion::new(
                self.goal_orientation[0],
                self.goal_orientation[1],
                self.goal_orientation[2],
                self.goal_orientation[3],
            )?,
            start_stiffness: Vector6::from_row_slice(&self.start_stiffness),
            goal_stiffness: Vector6::from_row_slice(&self.goal_stiffness),
            start_rate_position: Vector3::from_row_slice(&self.start_rate_position),
            start_rate_orientation: Vector3::from_row_slice(&self.start_rate_orientation),
            start_rate_stiffness: Vector6::from_row_slice(&self.start_rate_stiffness),
            bounds: self.bounds,
        })
    }
}

/// Reproduction quality of the fitted primitive against its own reference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReproductionErrors {
    /// Meters (RMS over the grid).
    pub position_rmse: f64,
    /// Largest per-axis position range of the reference, meters.
    pub position_extent: f64,
    /// Radians (RMS rotation angle).
    pub orientation_rmse: f64,
    /// RMS stiffness error as a fraction of each axis' bound range.
    pub stiffness_rmse_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmSummary {
    pub name: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnSummary {
    pub demo_count: usize,
    pub em: Vec<EmSummary>,
    pub stddev_min: [f64; 6],
    pub stddev_max: [f64; 6],
    /// Axes whose spread had no contrast and were held at mid-bounds.
    pub degenerate_axes: Vec<usize>,
    pub stiffness_start: [f64; 6],
    pub stiffness_goal: [f64; 6],
    pub reproduction: ReproductionErrors,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillBundle {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub summary: LearnSummary,
    pub gmm: GmmData,
    pub distribution: DistributionData,
    pub stiffness: ProfileData,
    pub dmp: DmpModelData,
}

impl SkillBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| {
            Error::Validation(format!("bundle serialization failed: {e}"))
        })?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bundle: SkillBundle = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported bundle format version {} (expected {BUNDLE_FORMAT_VERSION})",
                bundle.format_version
            )));
        }
        Ok(bundle)
    }

    pub fn distribution(&self) -> Result<TrajectoryDistribution> {
        self.distribution.to_distribution()
    }

    pub fn profile(&self) -> Result<StiffnessProfile> {
        self.stiffness.to_profile()
    }

    pub fn model(&self) -> Result<DmpModel> {
        self.dmp.to_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn gmm_data_roundtrips() {
        let model = GmmModel::new(
            vec![0.4, 0.6],
            vec![
                DVector::from_vec(vec![0.0, 1.0]),
                DVector::from_vec(vec![2.0, -1.0]),
            ],
            vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]),
                DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.9]),
            ],
        )
        .unwrap();
        let data = GmmModelData::from(&model);
        let back = data.to_model().unwrap();
        for k in 0..2 {
            assert_eq!(model.priors()[k], back.priors()[k]);
            assert_eq!(model.means()[k], back.means()[k]);
            assert_eq!(model.covariances()[k], back.covariances()[k]);
        }
    }

    #[test]
    fn malformed_bundle_reports_parse_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, "{\n  \"format_version\": oops\n}").unwrap();
        match SkillBundle::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
