//! File formats: ASCII PLY clouds, trajectory CSV, per-iteration
//! localizability CSV and metric summaries.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{Evaluation, RunOutput};
use crate::geometry::{Frame, PointCloud, RigidTransform, Vec3};
use crate::localizability::{Category, DIRECTION_NAMES};
use crate::metrics::Trajectory;

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.normals().is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.normals() {
            Some(n) => writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n[i].x, n[i].y, n[i].z)?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path, frame: Frame) -> Result<PointCloud> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let mut count = None;
    let mut props = Vec::new();
    let mut header_ok = false;
    for line in lines.by_ref() {
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] | ["comment", ..] => {}
            ["format", fmt, _] if *fmt != "ascii" => return Err(Error::Parse(format!("unsupported PLY format {fmt}"))),
            ["format", ..] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => {
                header_ok = true;
                break;
            }
            _ => return Err(Error::Parse(format!("unexpected PLY header line '{line}'"))),
        }
    }
    let count = count.filter(|_| header_ok).ok_or_else(|| Error::Parse("incomplete PLY header".into()))?;
    let has_normals = match props.as_slice() {
        [x, y, z] if x == "x" && y == "y" && z == "z" => false,
        [x, y, z, a, b, c] if x == "x" && y == "y" && z == "z" && a == "nx" && b == "ny" && c == "nz" => true,
        _ => return Err(Error::Parse(format!("expected properties x y z [nx ny nz], got {props:?}"))),
    };
    let (mut pts, mut nrm) = (Vec::with_capacity(count), Vec::new());
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::Parse("PLY ends before all vertices".into()))??;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != props.len() {
            return Err(Error::Parse(format!("vertex line has {} values, expected {}", v.len(), props.len())));
        }
        pts.push(Vec3::new(v[0], v[1], v[2]));
        if has_normals {
            nrm.push(Vec3::new(v[3], v[4], v[5]));
        }
    }
    if has_normals {
        PointCloud::with_normals(pts, nrm, frame)
    } else {
        PointCloud::new(pts, frame)
    }
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "tx", "ty", "tz", "rx", "ry", "rz"];

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(TRAJECTORY_HEADER).map_err(csv_error)?;
    for (t, pose) in trajectory.stamped() {
        let (p, r) = (pose.translation, pose.rotvec());
        w.write_record([t, &p.x, &p.y, &p.z, &r.x, &r.y, &r.z].map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    if r.headers().map_err(csv_error)?.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::Parse(format!("{} is not a trajectory CSV", path.display())));
    }
    let mut stamped = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let v: Vec<f64> = rec.iter().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")))).collect::<Result<_>>()?;
        stamped.push((v[0], RigidTransform::from_rotvec(Vec3::new(v[4], v[5], v[6]), Vec3::new(v[1], v[2], v[3]))));
    }
    Trajectory::new(stamped)
}

pub fn localizability_header() -> Vec<String> {
    let mut h = vec!["frame".to_string(), "iteration".to_string()];
    for prefix in ["ev", "lc", "ls", "cat"] {
        h.extend(DIRECTION_NAMES.iter().map(|d| format!("{prefix}_{d}")));
    }
    h
}

/// One row per registration iteration of every frame.
///
/// Detector rows carry eigenvalues in `[r1..r3, t1..t3]` order with the
/// contribution sums and categories. Remapping rows carry the ascending
/// combined spectrum, no contribution sums, and `none` for directions judged
/// degenerate. Plain rows leave everything after the iteration empty.
pub fn localizability_rows(run: &RunOutput) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for frame in &run.frames {
        for (it, rec) in frame.log.iter().enumerate() {
            let mut row = vec![frame.index.to_string(), it.to_string()];
            if let Some(report) = &rec.report {
                row.extend(report.basis.eigenvalues().iter().map(f64::to_string));
                row.extend(report.tables.l_combined.iter().map(f64::to_string));
                row.extend(report.tables.l_strong.iter().map(f64::to_string));
                row.extend(report.eta.iter().map(|c| c.as_str().to_string()));
            } else if let Some(remap) = &rec.remap {
                row.extend(remap.eigenvalues.iter().map(f64::to_string));
                row.extend(std::iter::repeat_n(String::new(), 12));
                row.extend(remap.degenerate_mask.iter().map(|&d| if d { Category::None } else { Category::Full }.as_str().to_string()));
            } else {
                row.extend(std::iter::repeat_n(String::new(), 24));
            }
            rows.push(row);
        }
    }
    rows
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(csv_error))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub fn frame_header() -> Vec<String> {
    ["frame", "t", "iterations", "converged", "fallback", "error"].map(String::from).to_vec()
}

pub fn frame_rows(run: &RunOutput) -> Vec<Vec<String>> {
    run.frames
        .iter()
        .map(|f| {
            vec![
                f.index.to_string(),
                f.time.to_string(),
                f.log.len().to_string(),
                f.converged.to_string(),
                f.failure.is_some().to_string(),
                f.failure.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn metrics_header() -> Vec<String> {
    [
        "method",
        "frames",
        "failed_frames",
        "ape_trans_mean",
        "ape_trans_std",
        "ape_rot_mean_deg",
        "ape_rot_std_deg",
        "end_position_error",
        "ape15_trans_mean",
        "ape15_trans_std",
        "ape15_rot_mean_deg",
        "ape15_rot_std_deg",
        "rpe10_trans_mean",
        "rpe10_trans_std",
        "rpe10_rot_mean_deg",
        "rpe10_rot_std_deg",
        "map_mean",
        "map_rmse",
    ]
    .map(String::from)
    .to_vec()
}

pub fn metrics_row(method: &str, frames: usize, failed: usize, eval: &Evaluation) -> Vec<String> {
    let (o, p) = (&eval.ape_origin.stats, &eval.ape_prefix.stats);
    let rpe = eval.rpe.map_or(vec![String::new(); 4], |r| {
        [r.trans_mean, r.trans_std, r.rot_mean_deg, r.rot_std_deg].iter().map(f64::to_string).collect()
    });
    let mut row = vec![method.to_string(), frames.to_string(), failed.to_string()];
    row.extend(
        [o.trans_mean, o.trans_std, o.rot_mean_deg, o.rot_std_deg, eval.ape_origin.last_position_error]
            .iter()
            .chain(&[p.trans_mean, p.trans_std, p.rot_mean_deg, p.rot_std_deg])
            .map(f64::to_string),
    );
    row.extend(rpe);
    row.extend([eval.map.mean, eval.map.rmse].iter().map(f64::to_string));
    row
}

pub fn map_error_rows(built: &PointCloud, per_point: &[f64]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["x", "y", "z", "error"].map(String::from).to_vec();
    let rows = built
        .points()
        .iter()
        .zip(per_point)
        .map(|(p, e)| [p.x, p.y, p.z, *e].iter().map(f64::to_string).collect())
        .collect();
    (header, rows)
}
