use rand::Rng;

use super::{action_stream, Dataset, Split, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const BENCHMARK_RATE_HZ: f64 = 20.0;
pub const DEFAULT_SUBSTEPS: usize = 8;

fn deriv(x: [f64; 2], a: f64) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    let c = x1.cos();
    let x1_3 = x1 * x1 * x1;
    let x1_5 = x1_3 * x1 * x1;
    [
        x2 - 0.1 * c * (5.0 * x1 - 4.0 * x1_3 + x1_5) - 0.5 * c * a,
        -65.0 * x1 + 50.0 * x1_3 - 15.0 * x1_5 - x2 - 100.0 * a,
    ]
}

fn rk4(x: [f64; 2], a: f64, h: f64) -> [f64; 2] {
    let add = |x: [f64; 2], k: [f64; 2], s: f64| [x[0] + s * k[0], x[1] + s * k[1]];
    let k1 = deriv(x, a);
    let k2 = deriv(add(x, k1, h / 2.0), a);
    let k3 = deriv(add(x, k2, h / 2.0), a);
    let k4 = deriv(add(x, k3, h), a);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates the benchmark system from the origin under the given
/// zero-order-hold actions. Returns `o_t = x₁(t)` at each tick; `a_t` acts
/// on the interval after `o_t` is read. `traj` only labels errors.
pub fn integrate_benchmark(actions: &[f64], substeps: usize, traj: usize) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    let h = 1.0 / BENCHMARK_RATE_HZ / substeps as f64;
    let mut x = [0.0, 0.0];
    let mut obs = Vec::with_capacity(actions.len());
    for (t, &a) in actions.iter().enumerate() {
        obs.push(x[0]);
        for _ in 0..substeps {
            x = rk4(x, a, h);
        }
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::Diverged {
                trajectory: traj,
                step: t + 1,
            });
        }
    }
    Ok(obs)
}

/// Simulates `n_traj` benchmark trajectories of length `len` with uniform
/// actions in [-0.5, 0.5], resampled at every 20 Hz tick.
pub fn simulate_benchmark(n_traj: usize, len: usize, substeps: usize, seed: u64) -> Result<Dataset> {
    if n_traj == 0 || len == 0 {
        return Err(Error::InvalidInput(
            "need at least one trajectory of at least one step".into(),
        ));
    }
    let trajectories = (0..n_traj)
        .map(|i| {
            let mut rng = action_stream(seed, i);
            let actions: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..=0.5)).collect();
            let obs = integrate_benchmark(&actions, substeps, i)?;
            Trajectory::new(Mat::from_vec(1, len, obs)?, Mat::from_vec(1, len, actions)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(trajectories, Split::assign(n_traj), 1.0 / BENCHMARK_RATE_HZ, seed)
}
