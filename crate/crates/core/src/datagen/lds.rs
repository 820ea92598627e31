use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{action_stream, noise_stream, Dataset, Split, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::oracles::{warn_if_unstable, Lds};

/// Blind action distribution, applied i.i.d. per step and per coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionDist {
    Uniform { low: f64, high: f64 },
    Gaussian { std: f64 },
    Constant(f64),
}

impl ActionDist {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ActionDist::Uniform { low, high } => rng.random_range(low..=high),
            ActionDist::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
            ActionDist::Constant(v) => v,
        }
    }
}

/// Symmetric square root `L` with `L Lᵀ = cov` (negative eigenvalues
/// clipped).
fn sqrt_psd(cov: &Mat) -> Mat {
    let eig = SymmetricEigen::new(cov.to_nalgebra());
    let n = cov.rows();
    Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt())
}

fn gaussian(l: &Mat, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..l.cols()).map(|_| StandardNormal.sample(rng)).collect();
    l.matvec(&z)
}

pub fn simulate_lds(
    m: &Lds,
    n_traj: usize,
    len: usize,
    actions: ActionDist,
    seed: u64,
) -> Result<Dataset> {
    simulate_lds_seeded(m, n_traj, len, actions, seed, seed)
}

/// As [`simulate_lds`] with separate seeds for the action and noise streams.
pub fn simulate_lds_seeded(
    m: &Lds,
    n_traj: usize,
    len: usize,
    actions: ActionDist,
    action_seed: u64,
    noise_seed: u64,
) -> Result<Dataset> {
    if n_traj == 0 || len == 0 {
        return Err(Error::InvalidInput(
            "need at least one trajectory of at least one step".into(),
        ));
    }
    warn_if_unstable(m);
    let (n, d_o, d_a) = (m.state_dim(), m.obs_dim(), m.act_dim());
    let lq = sqrt_psd(&m.process_cov);
    let lr = sqrt_psd(&m.obs_cov);
    let trajectories = (0..n_traj)
        .map(|i| {
            let mut arng = action_stream(action_seed, i);
            let mut nrng = noise_stream(noise_seed, i);
            let mut acts = Mat::zeros(d_a, len);
            for t in 0..len {
                for r in 0..d_a {
                    acts[(r, t)] = actions.sample(&mut arng);
                }
            }
            let mut obs = Mat::zeros(d_o, len);
            let mut x = vec![0.0; n];
            for t in 0..len {
                if t > 0 {
                    let mut next = m.a.matvec(&x)?;
                    let bu = m.b.matvec(&acts.col(t))?;
                    let eps = gaussian(&lq, &mut nrng)?;
                    for ((v, b), e) in next.iter_mut().zip(bu).zip(eps) {
                        *v += b + e;
                    }
                    x = next;
                }
                let cx = m.c.matvec(&x)?;
                let nu = gaussian(&lr, &mut nrng)?;
                for r in 0..d_o {
                    obs[(r, t)] = cx[r] + nu[r];
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        trajectory: i,
                        step: t,
                    });
                }
            }
            Trajectory::new(obs, acts)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(trajectories, Split::assign(n_traj), 1.0, action_seed)
}
