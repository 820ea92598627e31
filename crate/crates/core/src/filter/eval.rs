use rayon::prelude::*;

use super::{filter_update, predict_window};
use crate::datagen::Trajectory;
use crate::error::{Error, Result};
use crate::oracles::{kalman_filter_exact, Lds};
use crate::two_stage::RffPsrModel;

/// Anything that predicts windows of `k` future observations.
pub trait WindowPredictor: Sync {
    fn k(&self) -> usize;

    /// Predicted `o_{s..s+k}` (step-major) for every start `s ∈ [0, T-k]`,
    /// using observations before `s` and actions up to `s + k - 1`.
    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>>;
}

impl WindowPredictor for RffPsrModel {
    fn k(&self) -> usize {
        self.spec.k
    }

    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let k = self.spec.k;
        let n = (traj.len() + 1).saturating_sub(k);
        let mut q = self.q0.clone();
        let mut out = Vec::with_capacity(n);
        for s in 0..n {
            out.push(predict_window(self, &q, &traj.act_window(s as isize, k))?);
            if s + 1 < n {
                q = filter_update(self, &q, &traj.obs(s), &traj.act(s), self.lambda_filter)?;
            }
        }
        Ok(out)
    }
}

/// Exact Kalman predictions for a known linear system.
pub struct KalmanPredictor {
    pub lds: Lds,
    pub k: usize,
}

impl WindowPredictor for KalmanPredictor {
    fn k(&self) -> usize {
        self.k
    }

    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        Ok(kalman_filter_exact(&self.lds, traj, self.k)?.windows)
    }
}

/// Always predicts zero.
pub struct ZeroPredictor {
    pub k: usize,
}

impl WindowPredictor for ZeroPredictor {
    fn k(&self) -> usize {
        self.k
    }

    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let n = (traj.len() + 1).saturating_sub(self.k);
        Ok(vec![vec![0.0; self.k * traj.obs_dim()]; n])
    }
}

/// Reads the true future off the trajectory.
pub struct OraclePredictor {
    pub k: usize,
}

impl WindowPredictor for OraclePredictor {
    fn k(&self) -> usize {
        self.k
    }

    fn predict_windows(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let n = (traj.len() + 1).saturating_sub(self.k);
        Ok((0..n).map(|s| traj.obs_window(s as isize, self.k)).collect())
    }
}

/// Squared error summed over target times and observation coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonError {
    pub horizon: usize,
    pub sum_sq: f64,
    /// Number of target times.
    pub count: usize,
    pub obs_dim: usize,
}

impl HorizonError {
    /// Mean over target times and observation coordinates.
    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum_sq / (self.count * self.obs_dim) as f64
        }
    }
}

/// Number of horizon-`h` targets in a trajectory of length `len` when
/// target times before `skip` are excluded.
pub fn target_count(len: usize, k: usize, h: usize, skip: usize) -> usize {
    if len < k {
        return 0;
    }
    // Window starts s ∈ [0, len-k]; the target time is s + h - 1.
    let first = skip.saturating_sub(h - 1);
    (len - k + 1).saturating_sub(first)
}

/// Per-horizon errors on one trajectory. The horizon-`h` prediction of
/// `o_t` comes from the window starting at `t - h + 1`; target times
/// `t < skip` are excluded.
pub fn rollout_eval(
    pred: &dyn WindowPredictor,
    traj: &Trajectory,
    horizons: &[usize],
    skip: usize,
) -> Result<Vec<HorizonError>> {
    let k = pred.k();
    if let Some(h) = horizons.iter().find(|h| **h == 0 || **h > k) {
        return Err(Error::InvalidInput(format!("horizon {h} outside 1..={k}")));
    }
    if traj.len() < k {
        return Err(Error::InvalidInput(format!(
            "trajectory of length {} is shorter than the window k = {k}",
            traj.len()
        )));
    }
    let windows = pred.predict_windows(traj)?;
    let d_o = traj.obs_dim();
    let mut out: Vec<HorizonError> = horizons
        .iter()
        .map(|&h| HorizonError {
            horizon: h,
            sum_sq: 0.0,
            count: 0,
            obs_dim: d_o,
        })
        .collect();
    for (s, w) in windows.iter().enumerate() {
        for e in out.iter_mut() {
            let t = s + e.horizon - 1;
            if t < skip {
                continue;
            }
            let off = (e.horizon - 1) * d_o;
            let o = traj.obs(t);
            e.sum_sq += (0..d_o).map(|i| (w[off + i] - o[i]).powi(2)).sum::<f64>();
            e.count += 1;
        }
    }
    Ok(out)
}

/// Sums [`rollout_eval`] over trajectories (accumulated in index order).
pub fn evaluate_predictor(
    pred: &dyn WindowPredictor,
    trajs: &[&Trajectory],
    horizons: &[usize],
    skip: usize,
) -> Result<Vec<HorizonError>> {
    let per: Vec<Vec<HorizonError>> = trajs
        .par_iter()
        .map(|t| rollout_eval(pred, t, horizons, skip))
        .collect::<Result<_>>()?;
    let d_o = trajs.first().map(|t| t.obs_dim()).unwrap_or(1);
    let mut total: Vec<HorizonError> = horizons
        .iter()
        .map(|&h| HorizonError {
            horizon: h,
            sum_sq: 0.0,
            count: 0,
            obs_dim: d_o,
        })
        .collect();
    for errs in per {
        for (acc, e) in total.iter_mut().zip(errs) {
            acc.sum_sq += e.sum_sq;
            acc.count += e.count;
        }
    }
    Ok(total)
}
