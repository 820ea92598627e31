use log::warn;

use super::model::{FeatureKind, FutureSpec, HistoryKind, Hyperparams};
use crate::datagen::Trajectory;
use crate::error::{Error, Result};
use crate::features::{FeatureBlock, FeatureMap, IndicatorMap, PcaProjector, RawMap};
use crate::numerics::{khatri_rao, Mat};

/// Per-block seed offsets so every map draws independent frequencies.
mod seed_tag {
    pub const HISTORY: u64 = 1;
    pub const OBS: u64 = 2;
    pub const ACT: u64 = 3;
    pub const FUTURE_OBS: u64 = 4;
    pub const FUTURE_ACT: u64 = 5;
    pub const XI_OBS: u64 = 6;
    pub const XI_ACT: u64 = 7;
    pub const OO: u64 = 8;
    pub const Q: u64 = 9;
}

pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(tag.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub(crate) fn q_seed(seed: u64) -> u64 {
    sub_seed(seed, seed_tag::Q)
}

/// Feature maps and projections fit on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlocks {
    pub history: FeatureBlock,
    pub obs: FeatureBlock,
    pub act: FeatureBlock,
    pub future_obs: FeatureBlock,
    pub future_act: FeatureBlock,
    pub u_xi_obs: PcaProjector,
    pub u_xi_act: PcaProjector,
    pub u_oo: PcaProjector,
}

/// Projected features, one column per valid `(trajectory, t)`.
#[derive(Clone, Debug)]
pub struct FeaturizedData {
    pub spec: FutureSpec,
    pub blocks: FeatureBlocks,
    pub phi_h: Mat,
    pub phi_o: Mat,
    pub phi_a: Mat,
    pub psi_o: Mat,
    pub psi_a: Mat,
    pub psi_o_next: Mat,
    pub psi_a_next: Mat,
    pub xi_o: Mat,
    pub xi_a: Mat,
    pub phi_oo: Mat,
    /// Raw windows `o_{t..t+k}` (`k·d_o` rows).
    pub obs_windows: Mat,
    pub traj_index: Vec<usize>,
    pub time_index: Vec<usize>,
    pub n_trajectories: usize,
}

impl FeaturizedData {
    pub fn len(&self) -> usize {
        self.time_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns at `t = 0`, one per trajectory.
    pub fn first_step_columns(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.time_index[i] == 0).collect()
    }
}

/// Valid `t` for a trajectory of length `len`: `0 ≤ t ≤ len - k - 2`.
pub fn valid_steps(len: usize, k: usize) -> std::ops::Range<usize> {
    0..len.saturating_sub(k + 1)
}

struct Raw {
    history: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    fut_obs: Vec<Vec<f64>>,
    fut_act: Vec<Vec<f64>>,
    fut_obs_next: Vec<Vec<f64>>,
    fut_act_next: Vec<Vec<f64>>,
    traj_index: Vec<usize>,
    time_index: Vec<usize>,
}

fn collect_raw(trajs: &[&Trajectory], spec: FutureSpec) -> Result<(Raw, usize)> {
    let k = spec.k;
    let mut raw = Raw {
        history: Vec::new(),
        obs: Vec::new(),
        act: Vec::new(),
        fut_obs: Vec::new(),
        fut_act: Vec::new(),
        fut_obs_next: Vec::new(),
        fut_act_next: Vec::new(),
        traj_index: Vec::new(),
        time_index: Vec::new(),
    };
    let mut used = 0;
    for (n, traj) in trajs.iter().enumerate() {
        if traj.len() < k + 2 {
            warn!("skipping trajectory {n}: length {} < k + 2 = {}", traj.len(), k + 2);
            continue;
        }
        used += 1;
        for t in valid_steps(traj.len(), k) {
            raw.history.push(traj.history_window(t, spec.history_len));
            raw.obs.push(traj.obs(t));
            raw.act.push(traj.act(t));
            raw.fut_obs.push(traj.obs_window(t as isize, k));
            raw.fut_act.push(traj.act_window(t as isize, k));
            raw.fut_obs_next.push(traj.obs_window(t as isize + 1, k));
            raw.fut_act_next.push(traj.act_window(t as isize + 1, k));
            raw.traj_index.push(n);
            raw.time_index.push(t);
        }
    }
    if used == 0 {
        return Err(Error::InvalidInput(format!(
            "no trajectory is long enough for k = {k} (need length >= {})",
            k + 2
        )));
    }
    Ok((raw, used))
}

fn columns(v: &[Vec<f64>], rows: usize) -> Result<Mat> {
    if v.is_empty() {
        return Ok(Mat::zeros(rows, 0));
    }
    Mat::from_columns(v)
}

fn fit_block(
    kind: FeatureKind,
    segments: Vec<usize>,
    pad: bool,
    raw: &Mat,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<(FeatureBlock, Mat)> {
    match kind {
        FeatureKind::Rff => FeatureBlock::fit_rff(raw, hyper.num_freq, Some(hyper.p), seed),
        FeatureKind::Indicator => {
            let map = FeatureMap::Indicator(IndicatorMap { segments, pad });
            FeatureBlock::fit_with(map, raw, None, seed)
        }
    }
}

fn compress(kind: FeatureKind, raw: &Mat, p: usize, seed: u64) -> Result<(PcaProjector, Mat)> {
    match kind {
        FeatureKind::Rff => PcaProjector::fit_project(raw, p, seed),
        FeatureKind::Indicator => Ok((PcaProjector::identity(raw.rows()), raw.clone())),
    }
}

/// Builds and projects every feature block on the given (training)
/// trajectories.
pub fn build_features(
    trajs: &[&Trajectory],
    spec: FutureSpec,
    hyper: &Hyperparams,
) -> Result<FeaturizedData> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::InvalidInput("no training trajectories".into()))?;
    let (d_o, d_a, k) = (first.obs_dim(), first.act_dim(), spec.k);
    let (raw, used) = collect_raw(trajs, spec)?;
    let n = raw.time_index.len();
    if hyper.features == FeatureKind::Rff && hyper.p > n {
        return Err(Error::InvalidInput(format!(
            "p = {} exceeds the {n} available training samples",
            hyper.p
        )));
    }
    let kind = hyper.features;
    let seed = hyper.seed;
    let h_dim = spec.history_len * (d_o + d_a);

    let raw_h = columns(&raw.history, h_dim)?;
    let (history, phi_h) = match (hyper.history, kind) {
        (HistoryKind::RawWindow, _) => {
            let map = FeatureMap::Raw(RawMap {
                input_dim: h_dim,
                bias: true,
            });
            FeatureBlock::fit_with(map, &raw_h, None, seed)?
        }
        (HistoryKind::Rff, FeatureKind::Indicator) => {
            let segments = (0..spec.history_len).flat_map(|_| [d_o, d_a]).collect();
            fit_block(kind, segments, true, &raw_h, hyper, seed)?
        }
        (HistoryKind::Rff, FeatureKind::Rff) => {
            fit_block(kind, vec![], false, &raw_h, hyper, sub_seed(seed, seed_tag::HISTORY))?
        }
    };

    let (obs, phi_o) = fit_block(
        kind,
        vec![d_o],
        false,
        &columns(&raw.obs, d_o)?,
        hyper,
        sub_seed(seed, seed_tag::OBS),
    )?;
    let (act, phi_a) = fit_block(
        kind,
        vec![d_a],
        false,
        &columns(&raw.act, d_a)?,
        hyper,
        sub_seed(seed, seed_tag::ACT),
    )?;
    let (future_obs, psi_o) = fit_block(
        kind,
        vec![d_o; k],
        false,
        &columns(&raw.fut_obs, k * d_o)?,
        hyper,
        sub_seed(seed, seed_tag::FUTURE_OBS),
    )?;
    let (future_act, psi_a) = fit_block(
        kind,
        vec![d_a; k],
        false,
        &columns(&raw.fut_act, k * d_a)?,
        hyper,
        sub_seed(seed, seed_tag::FUTURE_ACT),
    )?;
    let psi_o_next = future_obs.apply_columns(&columns(&raw.fut_obs_next, k * d_o)?)?;
    let psi_a_next = future_act.apply_columns(&columns(&raw.fut_act_next, k * d_a)?)?;

    let (u_xi_obs, xi_o) = compress(
        kind,
        &khatri_rao(&psi_o_next, &phi_o)?,
        hyper.p,
        sub_seed(seed, seed_tag::XI_OBS),
    )?;
    let (u_xi_act, xi_a) = compress(
        kind,
        &khatri_rao(&phi_a, &psi_a_next)?,
        hyper.p,
        sub_seed(seed, seed_tag::XI_ACT),
    )?;
    let (u_oo, phi_oo) = compress(
        kind,
        &khatri_rao(&phi_o, &phi_o)?,
        hyper.p,
        sub_seed(seed, seed_tag::OO),
    )?;

    Ok(FeaturizedData {
        spec,
        blocks: FeatureBlocks {
            history,
            obs,
            act,
            future_obs,
            future_act,
            u_xi_obs,
            u_xi_act,
            u_oo,
        },
        phi_h,
        phi_o,
        phi_a,
        psi_o,
        psi_a,
        psi_o_next,
        psi_a_next,
        xi_o,
        xi_a,
        phi_oo,
        obs_windows: columns(&raw.fut_obs, k * d_o)?,
        traj_index: raw.traj_index,
        time_index: raw.time_index,
        n_trajectories: used,
    })
}
