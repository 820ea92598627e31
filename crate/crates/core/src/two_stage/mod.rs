//! Two-stage regression for RFF-PSRs: feature construction, stage one
//! (joint or conditional), stage two, initial state and the prediction
//! operator.

mod features;
mod model;
mod s1;
mod s2;

pub use features::{build_features, valid_steps, FeatureBlocks, FeaturizedData};
pub use model::{
    xi_act_index, xi_obs_index, FeatureKind, FutureSpec, HistoryKind, Hyperparams, RffPsrModel,
    S1Mode,
};
pub use s1::{conditional_operators, joint_operators, s1_conditional, s1_joint, stack_vec, S1Output};
pub use s2::{estimate_q0, mean_columns, s2_regress, train_w_pred};

use log::info;

use crate::datagen::Trajectory;
use crate::error::{Error, Result};
use crate::filter::evaluate_predictor;

/// Default regularization grid searched on the validation split.
pub const LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Runs stage one, stage two, the initial state and the prediction
/// operator on prepared features.
pub fn fit_from_features(fd: &FeaturizedData, hyper: &Hyperparams) -> Result<RffPsrModel> {
    let s1 = match hyper.s1 {
        S1Mode::Joint => s1_joint(fd, hyper.lambda1, hyper)?,
        S1Mode::Conditional => s1_conditional(fd, hyper.lambda1, hyper)?,
    };
    let (w_xi, w_o) = s2_regress(&s1, hyper.lambda2)?;
    let q0 = estimate_q0(&s1, fd, hyper.n_min(), hyper.lambda1)?;
    let w_pred = train_w_pred(&s1, fd, hyper.lambda2)?;
    let b = &fd.blocks;
    let model = RffPsrModel {
        spec: fd.spec,
        hyper: hyper.clone(),
        obs_dim: b.obs.input_dim(),
        act_dim: b.act.input_dim(),
        history: Some(b.history.clone()),
        obs: b.obs.clone(),
        act: b.act.clone(),
        future_obs: b.future_obs.clone(),
        future_act: b.future_act.clone(),
        u_xi_obs: b.u_xi_obs.clone(),
        u_xi_act: b.u_xi_act.clone(),
        u_oo: b.u_oo.clone(),
        u_q: s1.u_q,
        w_xi,
        w_o,
        w_pred,
        q0,
        lambda_filter: hyper.lambda_filter(),
        clip_obs_cov: true,
    };
    model.validate()?;
    Ok(model)
}

/// Learns an RFF-PSR from training trajectories.
pub fn learn_rff_psr(
    train: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
) -> Result<RffPsrModel> {
    let fd = build_features(train, spec, hyper)?;
    fit_from_features(&fd, hyper)
}

/// One row of a regularization search.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaTrial {
    pub lambda1: f64,
    pub lambda2: f64,
    pub val_mse: f64,
}

/// Fits every pair from `grid1 × grid2` on shared features and keeps the
/// model with the lowest validation horizon-1 MSE. Pairs that fail to fit
/// or evaluate are recorded with an infinite score.
pub fn select_lambdas(
    train: &[&Trajectory],
    val: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
    grid1: &[f64],
    grid2: &[f64],
) -> Result<(RffPsrModel, Vec<LambdaTrial>)> {
    if val.is_empty() {
        return Err(Error::InvalidInput("regularization search needs validation trajectories".into()));
    }
    let fd = build_features(train, spec, hyper)?;
    let mut best: Option<(f64, RffPsrModel)> = None;
    let mut trials = Vec::new();
    for &l1 in grid1 {
        for &l2 in grid2 {
            let h = Hyperparams {
                lambda1: l1,
                lambda2: l2,
                ..hyper.clone()
            };
            let score = fit_from_features(&fd, &h).and_then(|m| {
                let e = evaluate_predictor(&m, val, &[1], spec.history_len)?;
                Ok((e[0].mse(), m))
            });
            let mse = match score {
                Ok((mse, m)) if mse.is_finite() => {
                    if best.as_ref().is_none_or(|(b, _)| mse < *b) {
                        best = Some((mse, m));
                    }
                    mse
                }
                _ => f64::INFINITY,
            };
            info!("lambda1 = {l1:e}, lambda2 = {l2:e}: validation mse {mse:.6e}");
            trials.push(LambdaTrial {
                lambda1: l1,
                lambda2: l2,
                val_mse: mse,
            });
        }
    }
    let (_, model) =
        best.ok_or_else(|| Error::Numerical("no regularization setting produced a usable model".into()))?;
    Ok((model, trials))
}
