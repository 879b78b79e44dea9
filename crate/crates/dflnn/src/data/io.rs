//! Trajectory and pixel-frame I/O.
//!
//! Trajectory CSV layout is fixed: header `t,q0,...,q{d-1}`, one row per
//! sample, every number printed with 17 significant decimal digits so files
//! are byte-reproducible and round-trip exactly. Dataset metadata lives in a
//! JSON manifest next to the CSV files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::{Error, Result};

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = traj.dim();
    let mut out = String::new();
    out.push('t');
    for i in 0..d {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    for (n, q) in traj.positions.iter().enumerate() {
        out.push_str(&format_f64(n as f64 * traj.h));
        for x in q {
            out.push(',');
            out.push_str(&format_f64(*x));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io(format!("{}: empty file", path.display())))?;
    if !header.starts_with("t,q0") {
        return Err(Error::Io(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), ln + 2)))?;
        times.push(t);
        let q: std::result::Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        positions.push(q.map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), ln + 2)))?);
    }
    if positions.len() < 2 {
        return Err(Error::Io(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let h = times[1] - times[0];
    let traj = Trajectory {
        h,
        positions,
        velocities: None,
    };
    traj.validate()?;
    Ok(traj)
}

/// Dataset metadata written alongside the trajectory files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub generator: String,
    pub h: f64,
    pub dim: usize,
    pub n_steps: usize,
    pub sigma: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub params: serde_json::Value,
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Io(format!("manifest encode: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Pixel dataset: one CSV row of `width * height` intensities per frame.
pub fn write_pixel_csv(path: &Path, frames: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for frame in frames {
        let mut first = true;
        for v in frame {
            if !first {
                out.push(',');
            }
            out.push_str(&format_f64(*v));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pixel_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut frames = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.parse::<f64>()).collect();
        frames.push(row.map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), ln + 1)))?);
    }
    Ok(frames)
}
