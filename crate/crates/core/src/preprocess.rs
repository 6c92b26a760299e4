//! Demonstration ingest and temporal alignment.
//!
//! Demonstrations arrive as CSV files (`t,px,py,pz,qw,qx,qy,qz`, one header
//! line, LF endings) with arbitrary per-file clocks and sample counts. They are
//! mapped onto a shared uniform grid on `[0, t_scale]` by an affine clock map
//! plus interpolation: linear for positions, geodesic (via the tangent space)
//! for orientations.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::quaternion::{hemisphere_align, UnitQuaternion};

/// Quaternion rows whose norm is farther than this from 1 are rejected at
/// ingest; anything closer is silently renormalized.
pub const QUAT_INGEST_TOL: f64 = 1e-3;

pub const DEMO_CSV_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz";

#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

/// One recorded demonstration: at least two samples, strictly increasing time.
#[derive(Debug, Clone)]
pub struct Demonstration {
    samples: Vec<Sample>,
}

impl Demonstration {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation(format!(
                "a demonstration needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for pair in samples.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::Validation(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    pair[0].t, pair[1].t
                )));
            }
        }
        if samples.iter().any(|s| !s.t.is_finite() || !s.position.iter().all(|v| v.is_finite())) {
            return Err(Error::Validation(
                "demonstration contains non-finite values".to_string(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }
}

/// All demonstrations resampled onto one uniform grid `0..=t_scale`.
/// Orientations within each demonstration are hemisphere-aligned.
#[derive(Debug, Clone)]
pub struct AlignedDataset {
    pub grid: Vec<f64>,
    /// `positions[demo][grid_index]`
    pub positions: Vec<Vec<Vector3<f64>>>,
    /// `quaternions[demo][grid_index]`
    pub quaternions: Vec<Vec<UnitQuaternion>>,
}

impl AlignedDataset {
    pub fn demo_count(&self) -> usize {
        self.positions.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads one demonstration CSV. Line numbers in errors are 1-based and count
/// the header line.
pub fn load_demonstration_file(path: &Path) -> Result<Demonstration> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let got: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let want: Vec<&str> = DEMO_CSV_HEADER.split(',').collect();
    if got != want {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{DEMO_CSV_HEADER}`, got `{}`", header.trim()),
        ));
    }

    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let mut vals = [0.0f64; 8];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse::<f64>().map_err(|_| {
                parse_err(path, line_no, format!("cannot parse `{f}` as a number"))
            })?;
            if !vals[i].is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value `{f}`")));
            }
        }
        let qnorm =
            (vals[4] * vals[4] + vals[5] * vals[5] + vals[6] * vals[6] + vals[7] * vals[7]).sqrt();
        if (qnorm - 1.0).abs() > QUAT_INGEST_TOL {
            return Err(parse_err(
                path,
                line_no,
                format!("quaternion norm {qnorm:.6} is farther than {QUAT_INGEST_TOL} from 1"),
            ));
        }
        let orientation = UnitQuaternion::new(vals[4], vals[5], vals[6], vals[7])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if let Some(prev) = samples.last() {
            let prev: &Sample = prev;
            if !(vals[0] > prev.t) {
                return Err(parse_err(
                    path,
                    line_no,
                    format!(
                        "timestamps must be strictly increasing ({} then {})",
                        prev.t, vals[0]
                    ),
                ));
            }
        }
        samples.push(Sample {
            t: vals[0],
            position: Vector3::new(vals[1], vals[2], vals[3]),
            orientation,
        });
    }

    Demonstration::new(samples)
}

/// Loads every `*.csv` in a directory, in lexicographic filename order.
pub fn load_demonstrations(dir: &Path) -> Result<Vec<Demonstration>> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!(
            "no .csv demonstrations found in {}",
            dir.display()
        )));
    }
    files.iter().map(|p| load_demonstration_file(p)).collect()
}

pub fn write_demonstration_csv(path: &Path, demo: &Demonstration) -> Result<()> {
    let mut out = String::new();
    out.push_str(DEMO_CSV_HEADER);
    out.push('\n');
    for s in demo.samples() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.orientation.w,
            s.orientation.x,
            s.orientation.y,
            s.orientation.z
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Interpolates one demonstration at normalized progress `s` in `[0, 1]`.
/// Quaternions must already be hemisphere-aligned.
fn sample_at(
    demo_t: &[f64],
    positions: &[Vector3<f64>],
    quats: &[UnitQuaternion],
    s: f64,
) -> Result<(Vector3<f64>, UnitQuaternion)> {
    let m = demo_t.len();
    let t0 = demo_t[0];
    let t1 = demo_t[m - 1];
    if s <= 0.0 {
        return Ok((positions[0], quats[0]));
    }
    if s >= 1.0 {
        return Ok((positions[m - 1], quats[m - 1]));
    }
    let ts = t0 + s * (t1 - t0);
    // Largest j with demo_t[j] <= ts; partition_point gives the first index
    // where the predicate fails.
    let j = demo_t.partition_point(|&t| t <= ts).saturating_sub(1).min(m - 2);
    let dt = demo_t[j + 1] - demo_t[j];
    let alpha = ((ts - demo_t[j]) / dt).clamp(0.0, 1.0);
    let p = positions[j] * (1.0 - alpha) + positions[j + 1] * alpha;
    let step = (quats[j + 1] * quats[j].conjugate()).log()?;
    let q = UnitQuaternion::exp(&(step * alpha)) * quats[j];
    Ok((p, q))
}

/// Resamples every demonstration onto `samples` uniform points spanning
/// `[0, t_scale]`, via the affine clock map that sends each demonstration's
/// own `[start, end]` onto that interval. Start and end samples are copied
/// exactly, not interpolated.
pub fn time_align(
    demos: &[Demonstration],
    t_scale: f64,
    samples: usize,
) -> Result<AlignedDataset> {
    if demos.is_empty() {
        return Err(Error::Validation("no demonstrations to align".to_string()));
    }
    if !(t_scale.is_finite() && t_scale > 0.0) {
        return Err(Error::Validation(format!(
            "time scale must be positive and finite, got {t_scale}"
        )));
    }
    if samples < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 grid samples, got {samples}"
        )));
    }

    let grid: Vec<f64> = (0..samples)
        .map(|i| t_scale * i as f64 / (samples - 1) as f64)
        .collect();

    let mut positions = Vec::with_capacity(demos.len());
    let mut quaternions = Vec::with_capacity(demos.len());
    for demo in demos {
        let demo_t: Vec<f64> = demo.samples().iter().map(|s| s.t).collect();
        let pos: Vec<Vector3<f64>> = demo.samples().iter().map(|s| s.position).collect();
        let raw_q: Vec<UnitQuaternion> = demo.samples().iter().map(|s| s.orientation).collect();
        let quats = hemisphere_align(&raw_q);

        let mut demo_pos = Vec::with_capacity(samples);
        let mut demo_quat = Vec::with_capacity(samples);
        for i in 0..samples {
            let s = i as f64 / (samples - 1) as f64;
            let (p, q) = sample_at(&demo_t, &pos, &quats, s)?;
            demo_pos.push(p);
            demo_quat.push(q);
        }
        positions.push(demo_pos);
        quaternions.push(demo_quat);
    }

    Ok(AlignedDataset {
        grid,
        positions,
        quaternions,
    })
}

/// Projects aligned orientation tracks into the tangent space at the identity.
/// Each output vector has norm below pi.
pub fn to_tangent_space(quaternions: &[Vec<UnitQuaternion>]) -> Result<Vec<Vec<Vector3<f64>>>> {
    quaternions
        .iter()
        .map(|track| track.iter().map(|q| q.log()).collect())
        .collect()
}
