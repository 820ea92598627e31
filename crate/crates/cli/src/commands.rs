use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use rffpsr::arx::{arx_select, arx_train, ArxModel};
use rffpsr::datagen::{
    read_dataset, simulate_benchmark, simulate_lds, write_dataset, ActionDist, Dataset, Split,
    DEFAULT_SUBSTEPS,
};
use rffpsr::filter::{evaluate_predictor, WindowPredictor};
use rffpsr::numerics::Mat;
use rffpsr::oracles::Lds;
use rffpsr::refine::{refine as refine_model, write_log_csv, RefineConfig};
use rffpsr::two_stage::{
    learn_rff_psr, select_lambdas, FutureSpec, Hyperparams, RffPsrModel, S1Mode, LAMBDA_GRID,
};

use crate::config::{parse_horizons, Config};
use crate::report::{dataset_hash, sha256_hex, EvalReport, ReportRow};
use crate::{io_err, CliError, EvalArgs, RefineArgs, S1Arg, SimulateArgs, SystemArg, TrainArgs};

/// A model file: `{"kind": "rffpsr" | "arx", "model": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum SavedModel {
    Rffpsr(RffPsrModel),
    Arx(ArxModel),
}

impl SavedModel {
    pub fn load(path: &Path) -> Result<SavedModel, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let m: SavedModel = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        if let SavedModel::Rffpsr(m) = &m {
            m.validate()?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).map_err(|e| io_err(path, e))?;
        write_file(path, text.as_bytes())
    }

    fn predictor(&self) -> &dyn WindowPredictor {
        match self {
            SavedModel::Rffpsr(m) => m,
            SavedModel::Arx(m) => m,
        }
    }

    fn history_len(&self) -> usize {
        match self {
            SavedModel::Rffpsr(m) => m.spec.history_len,
            SavedModel::Arx(m) => m.spec.history_len,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Two-state, one-input, one-output system used by `simulate --system lds`.
pub fn reference_lds() -> Lds {
    Lds::new(
        Mat::from_rows(&[&[0.9, 0.2], &[-0.2, 0.8]]),
        Mat::from_rows(&[&[1.0], &[0.5]]),
        Mat::from_rows(&[&[1.0, 0.5]]),
        Mat::identity(2).scale(0.01),
        Mat::identity(1).scale(0.1),
    )
    .expect("reference system is valid")
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let system = match (a.system, cfg.system.as_deref()) {
        (Some(s), _) => s,
        (None, None | Some("benchmark")) => SystemArg::Benchmark,
        (None, Some("lds")) => SystemArg::Lds,
        (None, Some(other)) => return Err(CliError::Usage(format!("unknown system {other:?}"))),
    };
    let n_traj = a.n_traj.or(cfg.n_traj).unwrap_or(20);
    let len = a.len.or(cfg.len).unwrap_or(100);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let ds = match system {
        SystemArg::Benchmark => simulate_benchmark(n_traj, len, DEFAULT_SUBSTEPS, seed)?,
        SystemArg::Lds => simulate_lds(
            &reference_lds(),
            n_traj,
            len,
            ActionDist::Uniform { low: -1.0, high: 1.0 },
            seed,
        )?,
    };
    write_dataset(&ds, &a.out)?;
    info!("wrote {n_traj} trajectories of length {len} to {}", a.out.display());
    Ok(())
}

fn load_data(dir: &Path) -> Result<Dataset, CliError> {
    Ok(read_dataset(dir)?)
}

fn require_split<'a>(ds: &'a Dataset, which: Split) -> Result<Vec<&'a rffpsr::datagen::Trajectory>, CliError> {
    let v = ds.split(which);
    if v.is_empty() {
        return Err(CliError::Data(format!("dataset has no {which:?} trajectories")));
    }
    Ok(v)
}

struct LearnSettings {
    spec: FutureSpec,
    hyper: Hyperparams,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
}

fn learn_settings(a: &TrainArgs, cfg: &Config) -> Result<LearnSettings, CliError> {
    let defaults = Hyperparams::default();
    let default_spec = FutureSpec::default();
    let k = a.k.or(cfg.k).unwrap_or(default_spec.k);
    let history = a.history.or(cfg.history).unwrap_or(default_spec.history_len);
    let spec = FutureSpec::new(k, history).map_err(|e| CliError::Usage(e.to_string()))?;
    let s1 = match (a.s1, cfg.s1.as_deref()) {
        (Some(S1Arg::Joint), _) | (None, None | Some("joint")) => S1Mode::Joint,
        (Some(S1Arg::Cond), _) | (None, Some("cond")) => S1Mode::Conditional,
        (None, Some(other)) => return Err(CliError::Usage(format!("unknown s1 mode {other:?}"))),
    };
    let hyper = Hyperparams {
        num_freq: a.rff.or(cfg.rff).unwrap_or(defaults.num_freq),
        p: a.pca.or(cfg.pca).unwrap_or(defaults.p),
        lambda_filter: cfg.lambda_filter,
        seed: a.seed.or(cfg.seed).unwrap_or(defaults.seed),
        s1,
        ..defaults
    };
    Ok(LearnSettings {
        spec,
        hyper,
        lambda1: a.lambda1.or(cfg.lambda1),
        lambda2: a.lambda2.or(cfg.lambda2),
    })
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let s = learn_settings(a, &cfg)?;
    let ds = load_data(&a.data)?;
    let train = require_split(&ds, Split::Train)?;
    let model = match (s.lambda1, s.lambda2) {
        (Some(l1), Some(l2)) => {
            let hyper = Hyperparams {
                lambda1: l1,
                lambda2: l2,
                ..s.hyper
            };
            learn_rff_psr(&train, s.spec, &hyper)?
        }
        (l1, l2) => {
            let val = require_split(&ds, Split::Val)?;
            let g1 = l1.map_or_else(|| LAMBDA_GRID.to_vec(), |v| vec![v]);
            let g2 = l2.map_or_else(|| LAMBDA_GRID.to_vec(), |v| vec![v]);
            let (m, _) = select_lambdas(&train, &val, s.spec, &s.hyper, &g1, &g2)?;
            info!("selected lambda1 = {:e}, lambda2 = {:e}", m.hyper.lambda1, m.hyper.lambda2);
            m
        }
    };
    SavedModel::Rffpsr(model).save(&a.out)
}

pub fn arx(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let s = learn_settings(a, &cfg)?;
    let ds = load_data(&a.data)?;
    let train = require_split(&ds, Split::Train)?;
    let model = match s.lambda1 {
        Some(l) => arx_train(&train, s.spec, &s.hyper, l)?,
        None => {
            let val = require_split(&ds, Split::Val)?;
            let m = arx_select(&train, &val, s.spec, &s.hyper, &LAMBDA_GRID)?;
            info!("selected lambda = {:e}", m.lambda);
            m
        }
    };
    SavedModel::Arx(model).save(&a.out)
}

pub fn refine(a: &RefineArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let model = match SavedModel::load(&a.model)? {
        SavedModel::Rffpsr(m) => m,
        SavedModel::Arx(_) => {
            return Err(CliError::Data(format!("{} is an ARX model; only RFF-PSR models can be refined", a.model.display())))
        }
    };
    let ds = load_data(&a.data)?;
    let train = require_split(&ds, Split::Train)?;
    let val = require_split(&ds, Split::Val)?;
    let defaults = RefineConfig::default();
    let rc = RefineConfig {
        initial_step: cfg.initial_step,
        max_epochs: a.max_epochs.or(cfg.max_epochs).unwrap_or(defaults.max_epochs),
        ..defaults
    };
    let (refined, log) = refine_model(&model, &train, &val, &rc)?;
    let mut buf = Vec::new();
    write_log_csv(&log, &mut buf)?;
    let log_path = a.log.clone().unwrap_or_else(|| suffixed(&a.out, ".log.csv"));
    write_file(&log_path, &buf)?;
    info!("refinement ran {} epochs", log.len());
    SavedModel::Rffpsr(refined).save(&a.out)
}

pub(crate) fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn method_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let horizons = match (&a.horizons, &cfg.horizons) {
        (Some(h), _) => h.clone(),
        (None, Some(h)) => parse_horizons(&h.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .map_err(CliError::Usage)?,
        (None, None) => (1..=10).collect(),
    };
    let ds = load_data(&a.data)?;
    let test = require_split(&ds, Split::Test)?;
    let models = a
        .model
        .iter()
        .map(|p| SavedModel::load(p).map(|m| (p.clone(), m)))
        .collect::<Result<Vec<_>, _>>()?;
    let skip = a
        .history
        .or(cfg.history)
        .unwrap_or_else(|| models.iter().map(|(_, m)| m.history_len()).max().unwrap_or(0));
    let max_k = models.iter().map(|(_, m)| m.predictor().k()).min().unwrap_or(0);
    if let Some(h) = horizons.iter().find(|h| **h > max_k) {
        return Err(CliError::Usage(format!("horizon {h} exceeds the model window length {max_k}")));
    }

    let mut rows = Vec::new();
    let mut model_hashes = Vec::new();
    let mut seeds = vec![("dataset".to_string(), ds.seed)];
    for (path, m) in &models {
        let method = method_name(path);
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        model_hashes.push((method.clone(), sha256_hex(&bytes)));
        if let SavedModel::Rffpsr(r) = m {
            seeds.push((method.clone(), r.hyper.seed));
        }
        let errs = evaluate_predictor(m.predictor(), &test, &horizons, skip)?;
        for e in errs {
            rows.push(ReportRow {
                method: method.clone(),
                horizon: e.horizon,
                mse: e.mse(),
                n_points: e.count,
            });
        }
    }
    let report = EvalReport {
        rows,
        dataset_hash: dataset_hash(&a.data)?,
        model_hashes,
        seeds,
        skip,
    };
    warn_above_mean_baseline(&report, &ds, &test, &horizons, skip);
    report.write(&a.out)
}

/// Soft check: a trained model should not lose to predicting the training
/// mean observation.
fn warn_above_mean_baseline(
    report: &EvalReport,
    ds: &Dataset,
    test: &[&rffpsr::datagen::Trajectory],
    horizons: &[usize],
    skip: usize,
) {
    let train = ds.split(Split::Train);
    if train.is_empty() {
        return;
    }
    let d_o = ds.obs_dim;
    let mut mean = vec![0.0; d_o];
    let mut n = 0usize;
    for t in &train {
        for s in 0..t.len() {
            for (m, v) in mean.iter_mut().zip(t.obs(s)) {
                *m += v;
            }
            n += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let baseline = MeanPredictor {
        mean,
        k: horizons.iter().copied().max().unwrap_or(1),
    };
    let Ok(base) = evaluate_predictor(&baseline, test, horizons, skip) else {
        return;
    };
    for row in &report.rows {
        if let Some(b) = base.iter().find(|b| b.horizon == row.horizon) {
            if row.mse > b.mse() {
                warn!(
                    "{} at horizon {} has mse {:.4e}, above the mean predictor's {:.4e}",
                    row.method,
                    row.horizon,
                    row.mse,
                    b.mse()
                );
            }
        }
    }
}

struct MeanPredictor {
    mean: Vec<f64>,
    k: usize,
}

impl WindowPredictor for MeanPredictor {
    fn k(&self) -> usize {
        self.k
    }

    fn predict_windows(&self, traj: &rffpsr::datagen::Trajectory) -> rffpsr::Result<Vec<Vec<f64>>> {
        let n = (traj.len() + 1).saturating_sub(self.k);
        Ok(vec![self.mean.repeat(self.k); n])
    }
}
