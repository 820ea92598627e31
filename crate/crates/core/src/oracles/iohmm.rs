use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Mat, Tensor};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Discrete input-output HMM.
///
/// `transition` has modes (next state, state, action) and `emission` has
/// modes (observation, state, action), so every `(s, a)` slice along the
/// first mode is a probability vector. Observations depend on the current
/// state and the current action.
#[derive(Clone, Debug, PartialEq)]
pub struct IoHmm {
    transition: Tensor,
    emission: Tensor,
    initial: Vec<f64>,
}

impl IoHmm {
    pub fn new(transition: Tensor, emission: Tensor, initial: Vec<f64>) -> Result<Self> {
        let ts = transition.shape().to_vec();
        let es = emission.shape().to_vec();
        if ts.len() != 3 || es.len() != 3 {
            return dim_err("transition and emission must be 3-mode tensors");
        }
        let (n_s, n_a) = (ts[1], ts[2]);
        if ts[0] != n_s || es[1] != n_s || es[2] != n_a || initial.len() != n_s {
            return dim_err(format!(
                "inconsistent shapes: transition {ts:?}, emission {es:?}, initial {}",
                initial.len()
            ));
        }
        if n_s == 0 || n_a == 0 || es[0] == 0 {
            return Err(Error::InvalidModel("empty state, observation or action set".into()));
        }
        check_distribution(&initial, "initial belief")?;
        for s in 0..n_s {
            for a in 0..n_a {
                let col: Vec<f64> = (0..n_s).map(|n| transition.get(&[n, s, a])).collect();
                check_distribution(&col, &format!("transition slice (s={s}, a={a})"))?;
                let col: Vec<f64> = (0..es[0]).map(|o| emission.get(&[o, s, a])).collect();
                check_distribution(&col, &format!("emission slice (s={s}, a={a})"))?;
            }
        }
        Ok(IoHmm {
            transition,
            emission,
            initial,
        })
    }

    /// Builds from closures `trans(next, s, a)` and `emit(o, s, a)`.
    pub fn from_fn(
        n_states: usize,
        n_obs: usize,
        n_actions: usize,
        trans: impl Fn(usize, usize, usize) -> f64,
        emit: impl Fn(usize, usize, usize) -> f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let mut t = Tensor::zeros(&[n_states, n_states, n_actions]);
        let mut o = Tensor::zeros(&[n_obs, n_states, n_actions]);
        for s in 0..n_states {
            for a in 0..n_actions {
                for n in 0..n_states {
                    t.set(&[n, s, a], trans(n, s, a));
                }
                for k in 0..n_obs {
                    o.set(&[k, s, a], emit(k, s, a));
                }
            }
        }
        IoHmm::new(t, o, initial)
    }

    /// Random model with uniform-then-normalized tables. `sharpness > 1`
    /// concentrates mass by raising the uniform draws to that power.
    pub fn random(
        n_states: usize,
        n_obs: usize,
        n_actions: usize,
        sharpness: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0.05..1.0f64).powf(sharpness))
                .collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        };
        let mut t = Tensor::zeros(&[n_states, n_states, n_actions]);
        let mut o = Tensor::zeros(&[n_obs, n_states, n_actions]);
        for s in 0..n_states {
            for a in 0..n_actions {
                for (n, p) in draw(n_states).into_iter().enumerate() {
                    t.set(&[n, s, a], p);
                }
                for (k, p) in draw(n_obs).into_iter().enumerate() {
                    o.set(&[k, s, a], p);
                }
            }
        }
        let initial = draw(n_states);
        IoHmm::new(t, o, initial)
    }

    pub fn n_states(&self) -> usize {
        self.transition.shape()[0]
    }

    pub fn n_obs(&self) -> usize {
        self.emission.shape()[0]
    }

    pub fn n_actions(&self) -> usize {
        self.transition.shape()[2]
    }

    pub fn transition(&self) -> &Tensor {
        &self.transition
    }

    pub fn emission(&self) -> &Tensor {
        &self.emission
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `Pr[s' = next | s, a]`.
    pub fn trans(&self, next: usize, s: usize, a: usize) -> f64 {
        self.transition.get(&[next, s, a])
    }

    /// `Pr[o | s, a]`.
    pub fn emit(&self, o: usize, s: usize, a: usize) -> f64 {
        self.emission.get(&[o, s, a])
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Extended observation tensor `O^k` with modes (observation window, state,
/// action window). Window indices are step-major: `o_t` is the most
/// significant digit. Entry `(w, s, v)` is `Pr[o-window w | s, do(v)]`.
pub fn iohmm_extended_obs(m: &IoHmm, k: usize) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let (n_s, n_o, n_a) = (m.n_states(), m.n_obs(), m.n_actions());
    let mut prev = m.emission.clone();
    for level in 2..=k {
        let (no_r, na_r) = (n_o.pow(level as u32 - 1), n_a.pow(level as u32 - 1));
        let mut next = Tensor::zeros(&[n_o * no_r, n_s, n_a * na_r]);
        for s in 0..n_s {
            for a in 0..n_a {
                // O^{k-1} pushed through T(·|s,a): mixes the tail over next states.
                let mut tail = vec![0.0; no_r * na_r];
                for s2 in 0..n_s {
                    let w = m.trans(s2, s, a);
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..no_r {
                        for l in 0..na_r {
                            tail[r * na_r + l] += w * prev.get(&[r, s2, l]);
                        }
                    }
                }
                for o in 0..n_o {
                    let e = m.emit(o, s, a);
                    for r in 0..no_r {
                        for l in 0..na_r {
                            next.set(&[o * no_r + r, s, a * na_r + l], e * tail[r * na_r + l]);
                        }
                    }
                }
            }
        }
        prev = next;
    }
    Ok(prev)
}

/// Predictive state `Q = O^k ×_s belief`: rows index observation windows,
/// columns action windows.
pub fn iohmm_predictive_state(m: &IoHmm, belief: &[f64], k: usize) -> Result<Mat> {
    if belief.len() != m.n_states() {
        return dim_err(format!(
            "belief has {} entries for {} states",
            belief.len(),
            m.n_states()
        ));
    }
    let ok = iohmm_extended_obs(m, k)?;
    Ok(ok.contract_vec(belief, 1)?.to_mat(1))
}

/// Exact Bayes update of the state belief after observing `o` under action
/// `a`: condition on `o`, then push forward through the transition.
pub fn iohmm_exact_filter(m: &IoHmm, belief: &[f64], o: usize, a: usize) -> Result<Vec<f64>> {
    let n_s = m.n_states();
    if belief.len() != n_s {
        return dim_err(format!("belief has {} entries for {n_s} states", belief.len()));
    }
    if o >= m.n_obs() || a >= m.n_actions() {
        return Err(Error::InvalidInput(format!("observation {o} or action {a} out of range")));
    }
    let post: Vec<f64> = (0..n_s).map(|s| belief[s] * m.emit(o, s, a)).collect();
    let z: f64 = post.iter().sum();
    if z <= 0.0 {
        return Err(Error::ImpossibleObservation { obs: o, action: a });
    }
    let mut next = vec![0.0; n_s];
    for (s, p) in post.iter().enumerate() {
        for (s2, v) in next.iter_mut().enumerate() {
            *v += p / z * m.trans(s2, s, a);
        }
    }
    let total: f64 = next.iter().sum();
    Ok(next.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle() -> IoHmm {
        // Two states that swap every step; state s emits observation s.
        IoHmm::from_fn(
            2,
            2,
            2,
            |n, s, _| if n != s { 1.0 } else { 0.0 },
            |o, s, _| if o == s { 1.0 } else { 0.0 },
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_tables() {
        let bad = IoHmm::from_fn(2, 2, 1, |_, _, _| 0.6, |_, _, _| 0.5, vec![0.5, 0.5]);
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
        let neg = IoHmm::from_fn(
            2,
            2,
            1,
            |n, _, _| if n == 0 { 1.5 } else { -0.5 },
            |_, _, _| 0.5,
            vec![0.5, 0.5],
        );
        assert!(neg.is_err());
    }

    #[test]
    fn k1_is_emission() {
        let m = IoHmm::random(3, 2, 2, 1.0, 5).unwrap();
        assert_eq!(&iohmm_extended_obs(&m, 1).unwrap(), m.emission());
    }

    #[test]
    fn deterministic_cycle_k2() {
        let m = cycle();
        let o2 = iohmm_extended_obs(&m, 2).unwrap();
        assert_eq!(o2.shape(), &[4, 2, 4]);
        for s in 0..2 {
            let forced = s * 2 + (1 - s);
            for v in 0..4 {
                for w in 0..4 {
                    let want = if w == forced { 1.0 } else { 0.0 };
                    assert_eq!(o2.get(&[w, s, v]), want);
                }
            }
        }
    }

    #[test]
    fn predictive_state_columns_sum_to_one() {
        let m = IoHmm::random(3, 3, 2, 1.0, 9).unwrap();
        let q = iohmm_predictive_state(&m, &[0.2, 0.5, 0.3], 2).unwrap();
        for j in 0..q.cols() {
            let s: f64 = q.col(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_selects_slice() {
        let m = IoHmm::random(3, 2, 2, 1.0, 10).unwrap();
        let ok = iohmm_extended_obs(&m, 2).unwrap();
        let q = iohmm_predictive_state(&m, &[0.0, 1.0, 0.0], 2).unwrap();
        for w in 0..4 {
            for v in 0..4 {
                assert_eq!(q[(w, v)], ok.get(&[w, 1, v]));
            }
        }
    }

    #[test]
    fn deterministic_filter_is_forced() {
        let m = cycle();
        let b = iohmm_exact_filter(&m, &[0.5, 0.5], 1, 0).unwrap();
        assert_eq!(b, vec![1.0, 0.0]);
    }

    #[test]
    fn impossible_observation_errors() {
        let m = cycle();
        let err = iohmm_exact_filter(&m, &[1.0, 0.0], 1, 0).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation { obs: 1, action: 0 }));
    }

    #[test]
    fn uniform_emissions_push_forward_prior() {
        let base = IoHmm::random(3, 2, 2, 1.0, 12).unwrap();
        let m = IoHmm::from_fn(
            3,
            2,
            2,
            |n, s, a| base.trans(n, s, a),
            |_, _, _| 0.5,
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        let prior = [0.1, 0.6, 0.3];
        let post = iohmm_exact_filter(&m, &prior, 1, 1).unwrap();
        for s2 in 0..3 {
            let want: f64 = (0..3).map(|s| prior[s] * m.trans(s2, s, 1)).sum();
            assert!((post[s2] - want).abs() < 1e-15);
        }
    }
}
