//! Local refinement of a learned RFF-PSR by full-batch gradient descent,
//! with gradients from backpropagation through the filter recursion.

mod bptt;

pub use bptt::{bptt_gradients, Gradients};

use std::io::Write;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::datagen::Trajectory;
use crate::error::{Error, Result};
use crate::filter::evaluate_predictor;
use crate::numerics::Mat;
use crate::two_stage::{build_features, fit_from_features, FutureSpec, Hyperparams, RffPsrModel};

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    /// Starting step size; `None` probes `probe_grid` for one epoch.
    pub initial_step: Option<f64>,
    pub probe_grid: Vec<f64>,
    pub min_step: f64,
    /// Stop once an accepted step improves validation loss by less than
    /// this fraction.
    pub min_rel_improvement: f64,
    pub max_epochs: usize,
    pub refine_q0: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            initial_step: None,
            probe_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            min_step: 1e-5,
            min_rel_improvement: 1e-3,
            max_epochs: 500,
            refine_q0: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub step_size: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub accepted: bool,
}

pub fn write_log_csv(log: &[EpochLog], mut w: impl Write) -> Result<()> {
    writeln!(w, "epoch,step_size,train_loss,val_loss,accepted")?;
    for e in log {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{}",
            e.epoch, e.step_size, e.train_loss, e.val_loss, e.accepted
        )?;
    }
    Ok(())
}

/// Gradient of the mean squared prediction error over a set of
/// trajectories (per-trajectory gradients summed in index order).
pub fn batch_gradients(m: &RffPsrModel, trajs: &[&Trajectory]) -> Result<Gradients> {
    let per: Vec<Gradients> = trajs
        .par_iter()
        .map(|t| bptt_gradients(m, t, m.lambda_filter))
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros(m);
    for g in &per {
        total.add(g);
    }
    if total.count == 0 {
        return Err(Error::InvalidInput("no prediction windows in the batch".into()));
    }
    let n = total.count as f64;
    total.scale(1.0 / n);
    total.loss /= n;
    Ok(total)
}

/// Mean squared prediction error, or infinity if the filter fails.
pub fn mean_loss(m: &RffPsrModel, trajs: &[&Trajectory]) -> f64 {
    let per: Vec<Option<(f64, usize)>> = trajs
        .par_iter()
        .map(|t| {
            crate::filter::WindowPredictor::predict_windows(m, t)
                .ok()
                .map(|ws| {
                    let mut sse = 0.0;
                    let mut n = 0;
                    for (s, w) in ws.iter().enumerate() {
                        let target = t.obs_window(s as isize, m.spec.k);
                        sse += w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                        n += w.len();
                    }
                    (sse, n)
                })
        })
        .collect();
    let mut sse = 0.0;
    let mut n = 0;
    for r in per {
        match r {
            Some((s, c)) => {
                sse += s;
                n += c;
            }
            None => return f64::INFINITY,
        }
    }
    if n == 0 || !sse.is_finite() {
        f64::INFINITY
    } else {
        sse / n as f64
    }
}

fn step(m: &RffPsrModel, g: &Gradients, eta: f64, refine_q0: bool) -> RffPsrModel {
    let mut out = m.clone();
    out.w_xi.axpy(-eta, &g.w_xi);
    out.w_o.axpy(-eta, &g.w_o);
    out.w_pred.axpy(-eta, &g.w_pred);
    if refine_q0 {
        for (q, d) in out.q0.iter_mut().zip(&g.q0) {
            *q -= eta * d;
        }
    }
    out
}

fn params_finite(m: &RffPsrModel) -> bool {
    m.w_xi.is_finite() && m.w_o.is_finite() && m.w_pred.is_finite() && m.q0.iter().all(|v| v.is_finite())
}

/// Full-batch gradient descent on the training windows. A step is kept
/// only if validation loss does not increase; otherwise the parameters are
/// left unchanged and the step size halves. Stops when the step falls below
/// `min_step`, when an accepted step improves validation loss by less than
/// `min_rel_improvement`, or after `max_epochs`.
pub fn refine(
    model: &RffPsrModel,
    train: &[&Trajectory],
    val: &[&Trajectory],
    cfg: &RefineConfig,
) -> Result<(RffPsrModel, Vec<EpochLog>)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("refinement needs training and validation trajectories".into()));
    }
    let mut current = model.clone();
    let mut val_cur = mean_loss(&current, val);
    let mut log = Vec::new();
    if !val_cur.is_finite() {
        return Err(Error::Numerical("initial model has non-finite validation loss".into()));
    }

    let mut grad = batch_gradients(&current, train)?;
    let mut eta = match cfg.initial_step {
        Some(e) => e,
        None => probe_step(&current, &grad, val, cfg)?,
    };
    let mut epoch = 0;
    while eta >= cfg.min_step && epoch < cfg.max_epochs {
        epoch += 1;
        let cand = step(&current, &grad, eta, cfg.refine_q0);
        let val_new = if params_finite(&cand) {
            mean_loss(&cand, val)
        } else {
            f64::INFINITY
        };
        let accepted = val_new.is_finite() && val_new <= val_cur;
        log.push(EpochLog {
            epoch,
            step_size: eta,
            train_loss: grad.loss,
            val_loss: val_new,
            accepted,
        });
        info!(
            "epoch {epoch}: step {eta:.3e} train {:.6e} val {val_new:.6e} {}",
            grad.loss,
            if accepted { "accepted" } else { "rejected" }
        );
        if !accepted {
            eta /= 2.0;
            continue;
        }
        let rel = (val_cur - val_new) / val_cur.max(f64::MIN_POSITIVE);
        current = cand;
        val_cur = val_new;
        if rel < cfg.min_rel_improvement {
            break;
        }
        grad = batch_gradients(&current, train)?;
    }
    Ok((current, log))
}

/// Picks the probe step whose single update gives the lowest validation
/// loss; falls back to the smallest probe if none is finite.
fn probe_step(m: &RffPsrModel, g: &Gradients, val: &[&Trajectory], cfg: &RefineConfig) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &eta in &cfg.probe_grid {
        let cand = step(m, g, eta, cfg.refine_q0);
        let loss = if params_finite(&cand) {
            mean_loss(&cand, val)
        } else {
            f64::INFINITY
        };
        if loss.is_finite() && best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, eta));
        }
    }
    let fallback = cfg.probe_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if !fallback.is_finite() && best.is_none() {
        return Err(Error::InvalidInput("empty probe grid".into()));
    }
    Ok(best.map(|(_, e)| e).unwrap_or(fallback))
}

/// One candidate initialization in [`select_and_refine`].
#[derive(Clone, Debug, PartialEq)]
pub struct RefineTrial {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Validation horizon-1 MSE of the two-stage model.
    pub initial_val_mse: f64,
    /// Validation loss after refinement; `None` if the candidate was
    /// screened out or refinement failed.
    pub refined_val_loss: Option<f64>,
    pub epochs: usize,
}

#[derive(Clone, Debug)]
pub struct RefinedSelection {
    pub model: RffPsrModel,
    /// The two-stage model refinement started from.
    pub initial: RffPsrModel,
    pub log: Vec<EpochLog>,
    pub trials: Vec<RefineTrial>,
}

/// Chooses the two-stage initialization by validation loss after
/// refinement. Every `(λ₁, λ₂)` pair is fit on shared features and every
/// fit with a finite validation error is refined; the refined model with
/// the lowest validation loss is returned.
pub fn select_and_refine(
    train: &[&Trajectory],
    val: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
    grid1: &[f64],
    grid2: &[f64],
    cfg: &RefineConfig,
) -> Result<RefinedSelection> {
    if val.is_empty() {
        return Err(Error::InvalidInput("selection needs validation trajectories".into()));
    }
    let fd = build_features(train, spec, hyper)?;
    let mut best: Option<(f64, RefinedSelection)> = None;
    let mut trials = Vec::new();
    for &l1 in grid1 {
        for &l2 in grid2 {
            let h = Hyperparams {
                lambda1: l1,
                lambda2: l2,
                ..hyper.clone()
            };
            let mut trial = RefineTrial {
                lambda1: l1,
                lambda2: l2,
                initial_val_mse: f64::INFINITY,
                refined_val_loss: None,
                epochs: 0,
            };
            let Ok(init) = fit_from_features(&fd, &h) else {
                trials.push(trial);
                continue;
            };
            trial.initial_val_mse = evaluate_predictor(&init, val, &[1], spec.history_len)
                .map(|e| e[0].mse())
                .unwrap_or(f64::INFINITY);
            if !trial.initial_val_mse.is_finite() {
                info!("lambda1 = {l1:e}, lambda2 = {l2:e}: not refined (validation mse {:.4e})", trial.initial_val_mse);
                trials.push(trial);
                continue;
            }
            if let Ok((model, log)) = refine(&init, train, val, cfg) {
                let loss = mean_loss(&model, val);
                info!("lambda1 = {l1:e}, lambda2 = {l2:e}: refined validation loss {loss:.6e} after {} epochs", log.len());
                trial.refined_val_loss = Some(loss);
                trial.epochs = log.len();
                if loss.is_finite() && best.as_ref().is_none_or(|(b, _)| loss < *b) {
                    best = Some((
                        loss,
                        RefinedSelection {
                            model,
                            initial: init,
                            log,
                            trials: Vec::new(),
                        },
                    ));
                }
            }
            trials.push(trial);
        }
    }
    let (_, mut sel) =
        best.ok_or_else(|| Error::Numerical("no initialization could be refined".into()))?;
    sel.trials = trials;
    Ok(sel)
}

/// Same feature maps as `template`, with Gaussian parameter blocks scaled
/// by `scale / sqrt(fan_in)`.
pub fn random_init(template: &RffPsrModel, scale: f64, seed: u64) -> RffPsrModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |rows: usize, cols: usize| {
        let s = scale / (cols.max(1) as f64).sqrt();
        Mat::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        })
    };
    let mut m = template.clone();
    m.w_xi = gauss(m.w_xi.rows(), m.w_xi.cols());
    m.w_o = gauss(m.w_o.rows(), m.w_o.cols());
    m.w_pred = gauss(m.w_pred.rows(), m.w_pred.cols());
    m.q0 = gauss(m.q0.len(), 1).into_vec();
    m
}
