//! Trajectory datasets: the nonlinear benchmark system, linear-Gaussian
//! systems and discrete IO-HMMs, all driven by blind (open-loop) policies.

mod benchmark;
mod io;
mod iohmm;
mod lds;

pub use benchmark::{integrate_benchmark, simulate_benchmark, BENCHMARK_RATE_HZ, DEFAULT_SUBSTEPS};
pub use io::{format_f64, read_dataset, write_dataset, MANIFEST};
pub use iohmm::{one_hot_index, sample_iohmm};
pub use lds::{simulate_lds, simulate_lds_seeded, ActionDist};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Mat;

/// Observations (`d_o × T`) and actions (`d_a × T`); column `t` is step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Mat,
    pub actions: Mat,
}

impl Trajectory {
    pub fn new(observations: Mat, actions: Mat) -> Result<Self> {
        if observations.cols() != actions.cols() {
            return dim_err(format!(
                "trajectory has {} observations but {} actions",
                observations.cols(),
                actions.cols()
            ));
        }
        if observations.cols() == 0 {
            return Err(Error::InvalidInput("trajectory must have at least one step".into()));
        }
        if !observations.is_finite() || !actions.is_finite() {
            return Err(Error::Numerical("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory {
            observations,
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.rows()
    }

    pub fn act_dim(&self) -> usize {
        self.actions.rows()
    }

    pub fn obs(&self, t: usize) -> Vec<f64> {
        self.observations.col(t)
    }

    pub fn act(&self, t: usize) -> Vec<f64> {
        self.actions.col(t)
    }

    /// Stacked observations `o_{start..start+len}` (step-major); steps
    /// outside the trajectory are zero.
    pub fn obs_window(&self, start: isize, len: usize) -> Vec<f64> {
        window(&self.observations, start, len)
    }

    pub fn act_window(&self, start: isize, len: usize) -> Vec<f64> {
        window(&self.actions, start, len)
    }

    /// Interleaved `(o_s, a_s)` for the `len` steps ending at `end - 1`,
    /// zero-padded before the start of the trajectory.
    pub fn history_window(&self, end: usize, len: usize) -> Vec<f64> {
        let (d_o, d_a) = (self.obs_dim(), self.act_dim());
        let mut out = vec![0.0; len * (d_o + d_a)];
        for j in 0..len {
            let s = end as isize - len as isize + j as isize;
            if s < 0 || s as usize >= self.len() {
                continue;
            }
            let base = j * (d_o + d_a);
            for i in 0..d_o {
                out[base + i] = self.observations[(i, s as usize)];
            }
            for i in 0..d_a {
                out[base + d_o + i] = self.actions[(i, s as usize)];
            }
        }
        out
    }
}

fn window(m: &Mat, start: isize, len: usize) -> Vec<f64> {
    let d = m.rows();
    let mut out = vec![0.0; len * d];
    for j in 0..len {
        let s = start + j as isize;
        if s < 0 || s as usize >= m.cols() {
            continue;
        }
        for i in 0..d {
            out[j * d + i] = m[(i, s as usize)];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// Index-ordered split: first half train, next quarter validation, the
    /// rest test (10/5/5 for 20 trajectories).
    pub fn assign(n: usize) -> Vec<Split> {
        let n_train = n.div_ceil(2);
        let n_val = n / 4;
        (0..n)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub splits: Vec<Split>,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        splits: Vec<Split>,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no trajectories".into()))?;
        let (obs_dim, act_dim) = (first.obs_dim(), first.act_dim());
        if trajectories
            .iter()
            .any(|t| t.obs_dim() != obs_dim || t.act_dim() != act_dim)
        {
            return dim_err("trajectories disagree on observation/action dimensions");
        }
        if splits.len() != trajectories.len() {
            return dim_err("one split label is required per trajectory");
        }
        Ok(Dataset {
            trajectories,
            splits,
            obs_dim,
            act_dim,
            dt,
            seed,
        })
    }

    pub fn split(&self, which: Split) -> Vec<&Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == which)
            .map(|(t, _)| t)
            .collect()
    }

    pub fn split_owned(&self, which: Split) -> Vec<Trajectory> {
        self.split(which).into_iter().cloned().collect()
    }
}

/// Independent RNG stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn action_stream(seed: u64, traj: usize) -> ChaCha8Rng {
    stream_rng(seed, 2 * traj as u64)
}

pub(crate) fn noise_stream(seed: u64, traj: usize) -> ChaCha8Rng {
    stream_rng(seed, 2 * traj as u64 + 1)
}
