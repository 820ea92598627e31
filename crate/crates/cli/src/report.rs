use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use rffpsr::datagen::format_f64;

use crate::commands::{suffixed, write_file};
use crate::{io_err, CliError};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub horizon: usize,
    pub mse: f64,
    pub n_points: usize,
}

/// Per-method, per-horizon test MSE plus the metadata written to the
/// `<out>.meta.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip)]
    pub rows: Vec<ReportRow>,
    pub dataset_hash: String,
    pub model_hashes: Vec<(String, String)>,
    pub seeds: Vec<(String, u64)>,
    /// Target times before this step were excluded.
    pub skip: usize,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.horizon.cmp(&b.horizon)));
        let mut out = String::from("method,horizon,mse,n_points\n");
        for r in rows {
            out.push_str(&format!("{},{},{},{}\n", r.method, r.horizon, format_f64(r.mse), r.n_points));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.to_csv().as_bytes())?;
        let meta = serde_json::to_string_pretty(self).map_err(|e| io_err(path, e))?;
        write_file(&suffixed(path, ".meta.json"), meta.as_bytes())
    }

    /// Reads the rows of a results CSV.
    pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("method,horizon,mse,n_points") {
            return Err(io_err(path, "unexpected header"));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || io_err(path, format!("malformed row {}", i + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(ReportRow {
                    method: f[0].to_string(),
                    horizon: f[1].parse().map_err(|_| bad())?,
                    mse: f[2].parse().map_err(|_| bad())?,
                    n_points: f[3].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the manifest and CSV files of a dataset directory, in
/// file-name order.
pub fn dataset_hash(dir: &Path) -> Result<String, CliError> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
        h.update(fs::read(&p).map_err(|e| io_err(&p, e))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
