use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings accepted in a `--config` JSON file. Every field is optional;
/// command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub history: Option<usize>,
    pub rff: Option<usize>,
    pub pca: Option<usize>,
    pub s1: Option<String>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda_filter: Option<f64>,
    pub horizons: Option<Vec<usize>>,
    pub system: Option<String>,
    pub n_traj: Option<usize>,
    pub len: Option<usize>,
    pub max_epochs: Option<usize>,
    pub initial_step: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses `a..b` (inclusive), `a,b,c` or a single horizon.
pub fn parse_horizons(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| format!("bad horizon range {s:?}"))?;
        let b: usize = b.trim().parse().map_err(|_| format!("bad horizon range {s:?}"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("bad horizon {x:?}")))
            .collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(format!("horizons must be a non-empty list of positive integers, got {s:?}"));
    }
    Ok(out)
}
