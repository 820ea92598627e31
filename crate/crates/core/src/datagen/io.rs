use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Split, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    obs_dim: usize,
    act_dim: usize,
    dt: f64,
    seed: u64,
    trajectories: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    file: String,
    split: Split,
    length: usize,
}

/// Formats a float with 17 significant digits, which round-trips exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(d_o: usize, d_a: usize) -> Vec<String> {
    (0..d_o)
        .map(|i| format!("o{i}"))
        .chain((0..d_a).map(|i| format!("a{i}")))
        .collect()
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ds.trajectories.len());
    for (idx, (traj, split)) in ds.trajectories.iter().zip(&ds.splits).enumerate() {
        let file = format!("traj_{idx}.csv");
        let mut w = csv::Writer::from_path(dir.join(&file)).map_err(|e| csv_err(&dir.join(&file), e))?;
        let io = |e| csv_err(&dir.join(&file), e);
        w.write_record(header(ds.obs_dim, ds.act_dim)).map_err(io)?;
        for t in 0..traj.len() {
            let row: Vec<String> = traj
                .obs(t)
                .into_iter()
                .chain(traj.act(t))
                .map(format_f64)
                .collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        entries.push(Entry {
            file,
            split: *split,
            length: traj.len(),
        });
    }
    let manifest = Manifest {
        obs_dim: ds.obs_dim,
        act_dim: ds.act_dim,
        dt: ds.dt,
        seed: ds.seed,
        trajectories: entries,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn csv_err(file: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            file: file.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| parse_err(&mpath, e.line() as u64, e.to_string()))?;
    let (d_o, d_a) = (manifest.obs_dim, manifest.act_dim);
    let want_header = header(d_o, d_a);
    let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
    let mut splits = Vec::with_capacity(manifest.trajectories.len());
    for entry in &manifest.trajectories {
        let path: PathBuf = dir.join(&entry.file);
        if !path.is_file() {
            return Err(parse_err(
                &mpath,
                0,
                format!("listed trajectory file {} does not exist", entry.file),
            ));
        }
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(&path)
            .map_err(|e| csv_err(&path, e))?;
        let got: Vec<String> = r
            .headers()
            .map_err(|e| csv_err(&path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if got != want_header {
            return Err(parse_err(
                &path,
                1,
                format!("header {got:?} does not match manifest dims (expected {want_header:?})"),
            ));
        }
        let mut obs = Vec::new();
        let mut acts = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != d_o + d_a {
                return Err(parse_err(
                    &path,
                    line,
                    format!("expected {} columns, found {}", d_o + d_a, rec.len()),
                ));
            }
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(&path, line, format!("invalid number {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(&path, line, "non-finite value"));
                }
                if i < d_o {
                    obs.push(v);
                } else {
                    acts.push(v);
                }
            }
        }
        let len = obs.len() / d_o.max(1);
        let len = if d_o == 0 { acts.len() / d_a.max(1) } else { len };
        if len != entry.length {
            return Err(parse_err(
                &path,
                0,
                format!("manifest lists {} rows but file has {len}", entry.length),
            ));
        }
        // Rows are time steps; the trajectory stores time along columns.
        let o = Mat::from_vec(len, d_o, obs)?.transpose();
        let a = Mat::from_vec(len, d_a, acts)?.transpose();
        trajectories.push(Trajectory::new(o, a)?);
        splits.push(entry.split);
    }
    let ds = Dataset::new(trajectories, splits, manifest.dt, manifest.seed)?;
    Ok(ds)
}
