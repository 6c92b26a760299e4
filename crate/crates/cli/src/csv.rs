//! Trajectory and trace CSV formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back in reproduces the exact values that were written and identical
//! runs produce identical bytes.

use std::fs;
use std::path::Path;

use nalgebra::{Vector3, Vector6};

use impdmp_core::dmp::Trajectory;
use impdmp_core::error::{Error, Result};
use impdmp_core::quaternion::UnitQuaternion;
use impdmp_core::vic::SimTrace;

pub const TRAJECTORY_HEADER: &str = "t,px,py,pz,qw,qx,qy,qz,kx,ky,kz,krx,kry,krz";
pub const TRACE_HEADER: &str =
    "t,ex,ey,ez,erx,ery,erz,fx,fy,fz,tx,ty,tz,kx,ky,kz,krx,kry,krz";

/// Writes a rolled-out trajectory: time, position, unit quaternion
/// (w, x, y, z), and the six stiffness values per row.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::with_capacity(traj.len() * 96);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for i in 0..traj.len() {
        let p = traj.positions[i];
        let q = traj.quaternions[i];
        let k = traj.stiffness[i];
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            traj.t[i], p.x, p.y, p.z, q.w, q.x, q.y, q.z, k[0], k[1], k[2], k[3], k[4], k[5]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a trajectory CSV produced by [`write_trajectory`].
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".to_string()))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{TRAJECTORY_HEADER}`, got `{}`", header.trim()),
        ));
    }

    let mut traj = Trajectory {
        t: Vec::new(),
        positions: Vec::new(),
        quaternions: Vec::new(),
        stiffness: Vec::new(),
    };
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(parse_err(
                line_no,
                format!("expected 14 comma-separated fields, got {}", fields.len()),
            ));
        }
        let mut v = [0.0f64; 14];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field.trim().parse::<f64>().map_err(|e| {
                parse_err(line_no, format!("bad number `{}`: {e}", field.trim()))
            })?;
        }
        traj.t.push(v[0]);
        traj.positions.push(Vector3::new(v[1], v[2], v[3]));
        traj.quaternions
            .push(UnitQuaternion::new(v[4], v[5], v[6], v[7]).map_err(|e| {
                parse_err(line_no, format!("bad quaternion: {e}"))
            })?);
        traj.stiffness
            .push(Vector6::new(v[8], v[9], v[10], v[11], v[12], v[13]));
    }
    if traj.len() < 2 {
        return Err(parse_err(1, "trajectory needs at least 2 rows".to_string()));
    }
    Ok(traj)
}

/// Writes a simulation trace: time, position error, orientation error
/// (tangent-space radians), commanded force and torque, and the active
/// stiffness, per row.
pub fn write_trace(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut out = String::with_capacity(trace.len() * 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for i in 0..trace.len() {
        let e = trace.position_error[i];
        let er = trace.orientation_error[i];
        let f = trace.wrench[i].force;
        let tq = trace.wrench[i].torque;
        let k = trace.stiffness[i];
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            trace.t[i],
            e.x,
            e.y,
            e.z,
            er.x,
            er.y,
            er.z,
            f.x,
            f.y,
            f.z,
            tq.x,
            tq.y,
            tq.z,
            k[0],
            k[1],
            k[2],
            k[3],
            k[4],
            k[5]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
