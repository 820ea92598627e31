//! RFF-ARX baseline: one ridge regression from history features and
//! future-action features to the window of future observations.

use serde::{Deserialize, Serialize};

use crate::datagen::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::features::{FeatureBlock, FeatureMap, RawMap};
use crate::filter::{evaluate_predictor, WindowPredictor};
use crate::numerics::{ridge_solve_affine, Mat};
use crate::two_stage::{FutureSpec, HistoryKind, Hyperparams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub spec: FutureSpec,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub history: FeatureBlock,
    pub future_act: FeatureBlock,
    /// `k·d_o × (dφh + dψa + 1)`; the last column is an intercept.
    pub weights: Mat,
    pub lambda: f64,
}

fn samples(trajs: &[&Trajectory], spec: FutureSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (mut h, mut a, mut o) = (Vec::new(), Vec::new(), Vec::new());
    for traj in trajs {
        if traj.len() < spec.k {
            continue;
        }
        for s in 0..=traj.len() - spec.k {
            h.push(traj.history_window(s, spec.history_len));
            a.push(traj.act_window(s as isize, spec.k));
            o.push(traj.obs_window(s as isize, spec.k));
        }
    }
    (h, a, o)
}

struct Prepared {
    history: FeatureBlock,
    future_act: FeatureBlock,
    inputs: Mat,
    targets: Mat,
}

fn prepare(train: &[&Trajectory], spec: FutureSpec, hyper: &Hyperparams) -> Result<Prepared> {
    let (h, a, o) = samples(train, spec);
    if h.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no training trajectory is at least k = {} long",
            spec.k
        )));
    }
    let raw_h = if h[0].is_empty() {
        Mat::zeros(0, h.len())
    } else {
        Mat::from_columns(&h)?
    };
    let p = Some(hyper.p);
    let (history, phi_h) = match hyper.history {
        HistoryKind::Rff => FeatureBlock::fit_rff(&raw_h, hyper.num_freq, p, hyper.seed ^ 0xa1)?,
        HistoryKind::RawWindow => {
            let map = FeatureMap::Raw(RawMap {
                input_dim: raw_h.rows(),
                bias: false,
            });
            FeatureBlock::fit_with(map, &raw_h, None, hyper.seed)?
        }
    };
    let (future_act, psi_a) =
        FeatureBlock::fit_rff(&Mat::from_columns(&a)?, hyper.num_freq, p, hyper.seed ^ 0xa2)?;
    Ok(Prepared {
        history,
        future_act,
        inputs: phi_h.vstack(&psi_a)?,
        targets: Mat::from_columns(&o)?,
    })
}

fn fit(prep: &Prepared, spec: FutureSpec, d_o: usize, d_a: usize, lambda: f64) -> Result<ArxModel> {
    Ok(ArxModel {
        spec,
        obs_dim: d_o,
        act_dim: d_a,
        history: prep.history.clone(),
        future_act: prep.future_act.clone(),
        weights: ridge_solve_affine(&prep.inputs, &prep.targets, lambda)?,
        lambda,
    })
}

pub fn arx_train(
    train: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
    lambda: f64,
) -> Result<ArxModel> {
    let prep = prepare(train, spec, hyper)?;
    fit(&prep, spec, train[0].obs_dim(), train[0].act_dim(), lambda)
}

/// Trains on every `λ` in `grid` and keeps the best validation horizon-1
/// MSE.
pub fn arx_select(
    train: &[&Trajectory],
    val: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
    grid: &[f64],
) -> Result<ArxModel> {
    let prep = prepare(train, spec, hyper)?;
    let mut best: Option<(f64, ArxModel)> = None;
    for &lambda in grid {
        let m = fit(&prep, spec, train[0].obs_dim(), train[0].act_dim(), lambda)?;
        let mse = evaluate_predictor(&m, val, &[1], spec.history_len)?[0].mse();
        if best.as_ref().is_none_or(|(b, _)| mse < *b) {
            best = Some((mse, m));
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::InvalidInput("empty regularization grid".into()))
}

/// Predicts `o_{s..s+k}` from the history window ending at `s - 1` and the
/// future actions.
pub fn arx_predict(m: &ArxModel, history: &[f64], future_actions: &[f64]) -> Result<Vec<f64>> {
    if future_actions.len() != m.spec.k * m.act_dim {
        return dim_err(format!(
            "prediction needs {} action values, got {}",
            m.spec.k * m.act_dim,
            future_actions.len()
        ));
    }
    let mut x = m.history.apply(history)?;
    x.extend(m.future_act.apply(future_actions)?);
    x.push(1.0);
    m.weights.matvec(&x)
}

impl WindowPredictor for ArxModel {
    fn k(&self) -> usize {
        self.spec.k
    }

    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let k = self.spec.k;
        let n = (traj.len() + 1).saturating_sub(k);
        (0..n)
            .map(|s| {
                arx_predict(
                    self,
                    &traj.history_window(s, self.spec.history_len),
                    &traj.act_window(s as isize, k),
                )
            })
            .collect()
    }
}
