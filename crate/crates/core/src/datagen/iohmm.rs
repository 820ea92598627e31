use rand::Rng;

use super::{action_stream, noise_stream, Dataset, Split, Trajectory};
use crate::error::{dim_err, Error, Result};
use crate::numerics::Mat;
use crate::oracles::IoHmm;

fn categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; take the last supported index.
    p.iter().rposition(|v| *v > 0.0).unwrap_or(0)
}

/// Samples one-hot encoded trajectories under an i.i.d. blind policy.
pub fn sample_iohmm(
    m: &IoHmm,
    policy: &[f64],
    n_traj: usize,
    len: usize,
    seed: u64,
) -> Result<Dataset> {
    let (n_s, n_o, n_a) = (m.n_states(), m.n_obs(), m.n_actions());
    if policy.len() != n_a {
        return dim_err(format!("policy has {} entries for {n_a} actions", policy.len()));
    }
    let total: f64 = policy.iter().sum();
    if policy.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidModel("policy is not a probability vector".into()));
    }
    if n_traj == 0 || len == 0 {
        return Err(Error::InvalidInput(
            "need at least one trajectory of at least one step".into(),
        ));
    }
    let trajectories = (0..n_traj)
        .map(|i| {
            let mut arng = action_stream(seed, i);
            let mut srng = noise_stream(seed, i);
            let mut obs = Mat::zeros(n_o, len);
            let mut acts = Mat::zeros(n_a, len);
            let mut s = categorical(m.initial(), &mut srng);
            let mut col = vec![0.0; n_s.max(n_o)];
            for t in 0..len {
                let a = categorical(policy, &mut arng);
                for (o, c) in col.iter_mut().enumerate().take(n_o) {
                    *c = m.emit(o, s, a);
                }
                let o = categorical(&col[..n_o], &mut srng);
                for (n, c) in col.iter_mut().enumerate().take(n_s) {
                    *c = m.trans(n, s, a);
                }
                s = categorical(&col[..n_s], &mut srng);
                obs[(o, t)] = 1.0;
                acts[(a, t)] = 1.0;
            }
            Trajectory::new(obs, acts)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(trajectories, Split::assign(n_traj), 1.0, seed)
}

/// Index of the hot entry of a one-hot column.
pub fn one_hot_index(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| *x == 1.0)
}
