use log::warn;

use crate::datagen::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{clip_psd, sym_inverse, Mat, DEFAULT_PINV_TOL};

/// Linear-Gaussian system with inputs, started at `x_0 = 0`:
/// `x_t = A x_{t-1} + B a_t + ε_t` for `t ≥ 1`, `o_t = C x_t + ν_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lds {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub process_cov: Mat,
    pub obs_cov: Mat,
}

impl Lds {
    pub fn new(a: Mat, b: Mat, c: Mat, process_cov: Mat, obs_cov: Mat) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || b.rows() != n || c.cols() != n {
            return dim_err(format!(
                "inconsistent system matrices: A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ));
        }
        if process_cov.shape() != (n, n) || obs_cov.shape() != (c.rows(), c.rows()) {
            return dim_err("noise covariance shapes do not match the system");
        }
        check_psd(&process_cov, "process covariance")?;
        check_psd(&obs_cov, "observation covariance")?;
        Ok(Lds {
            a,
            b,
            c,
            process_cov,
            obs_cov,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn act_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .to_nalgebra()
            .complex_eigenvalues()
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

fn check_psd(m: &Mat, what: &str) -> Result<()> {
    let scale = m.max_abs().max(1.0);
    if m.sub(&m.transpose())?.max_abs() > 1e-10 * scale {
        return Err(Error::InvalidModel(format!("{what} is not symmetric")));
    }
    let eig = nalgebra::SymmetricEigen::new(m.to_nalgebra());
    if eig.eigenvalues.iter().any(|l| *l < -1e-10 * scale) {
        return Err(Error::InvalidModel(format!("{what} is not positive semidefinite")));
    }
    Ok(())
}

/// `Γ_k`: block row `i` (0-based) is `C A^{i+1}`.
pub fn lds_gamma(m: &Lds, k: usize) -> Result<Mat> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let (d_o, n) = (m.obs_dim(), m.state_dim());
    let mut out = Mat::zeros(k * d_o, n);
    let mut pow = m.a.clone();
    for i in 0..k {
        let blk = m.c.matmul(&pow)?;
        for r in 0..d_o {
            out.row_mut(i * d_o + r).copy_from_slice(blk.row(r));
        }
        pow = m.a.matmul(&pow)?;
    }
    Ok(out)
}

/// `U_k`: lower block-Toeplitz, block `(i, j)` is `C A^{i-j} B` for `i ≥ j`.
pub fn lds_u(m: &Lds, k: usize) -> Result<Mat> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let (d_o, d_a) = (m.obs_dim(), m.act_dim());
    let mut markov = Vec::with_capacity(k);
    let mut ab = m.b.clone();
    for _ in 0..k {
        markov.push(m.c.matmul(&ab)?);
        ab = m.a.matmul(&ab)?;
    }
    let mut out = Mat::zeros(k * d_o, k * d_a);
    for i in 0..k {
        for j in 0..=i {
            let blk = &markov[i - j];
            for r in 0..d_o {
                for c in 0..d_a {
                    out[(i * d_o + r, j * d_a + c)] = blk[(r, c)];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct KalmanOutput {
    /// `E[x_t | o_{0..=t}]`.
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Mat>,
    /// Window `s` predicts `o_{s..s+k}` from `o_{<s}` and the actions.
    pub windows: Vec<Vec<f64>>,
}

/// Standard Kalman filter over one trajectory, with `k`-step window
/// predictions for every start `s ∈ [0, T-k]`.
pub fn kalman_filter_exact(m: &Lds, traj: &Trajectory, k: usize) -> Result<KalmanOutput> {
    if traj.obs_dim() != m.obs_dim() || traj.act_dim() != m.act_dim() {
        return dim_err("trajectory dimensions do not match the system");
    }
    let n = m.state_dim();
    let t_len = traj.len();
    let mut means = Vec::with_capacity(t_len);
    let mut covs = Vec::with_capacity(t_len);
    let mut windows = Vec::new();
    let mut mean = vec![0.0; n];
    let mut cov = Mat::zeros(n, n);
    for t in 0..t_len {
        if t > 0 {
            (mean, cov) = predict_step(m, &mean, &cov, &traj.act(t))?;
        }
        if k > 0 && t + k <= t_len {
            windows.push(rollout_mean(m, &mean, traj, t, k)?);
        }
        (mean, cov) = update_step(m, &mean, &cov, &traj.obs(t))?;
        if !cov.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("kalman filter diverged at step {t}")));
        }
        means.push(mean.clone());
        covs.push(cov.clone());
    }
    Ok(KalmanOutput {
        means,
        covs,
        windows,
    })
}

fn predict_step(m: &Lds, mean: &[f64], cov: &Mat, action: &[f64]) -> Result<(Vec<f64>, Mat)> {
    let mut next = m.a.matvec(mean)?;
    for (x, y) in next.iter_mut().zip(m.b.matvec(action)?) {
        *x += y;
    }
    let p = m.a.matmul(cov)?.matmul_tr(&m.a)?.add(&m.process_cov)?;
    Ok((next, p.symmetrize()))
}

fn update_step(m: &Lds, mean: &[f64], cov: &Mat, obs: &[f64]) -> Result<(Vec<f64>, Mat)> {
    let s = m.c.matmul(cov)?.matmul_tr(&m.c)?.add(&m.obs_cov)?.symmetrize();
    let (s_inv, fallback) = sym_inverse(&s, DEFAULT_PINV_TOL)?;
    if fallback && s.max_abs() > 0.0 {
        warn!("innovation covariance is singular; using pseudo-inverse");
    }
    let gain = cov.matmul_tr(&m.c)?.matmul(&s_inv)?;
    let pred = m.c.matvec(mean)?;
    let innov: Vec<f64> = obs.iter().zip(&pred).map(|(o, p)| o - p).collect();
    let mut next = mean.to_vec();
    for (x, y) in next.iter_mut().zip(gain.matvec(&innov)?) {
        *x += y;
    }
    // Joseph form keeps the update symmetric PSD up to rounding.
    let mut i_kc = gain.matmul(&m.c)?.scale(-1.0);
    i_kc.add_diag(1.0);
    let p = i_kc
        .matmul(cov)?
        .matmul_tr(&i_kc)?
        .add(&gain.matmul(&m.obs_cov)?.matmul_tr(&gain)?)?;
    Ok((next, clip_psd(&p.symmetrize())))
}

/// Noise-free propagation of `prior` (the belief over `x_s` before `o_s`)
/// through the actions `a_{s+1..s+k}`, read out through `C`.
fn rollout_mean(m: &Lds, prior: &[f64], traj: &Trajectory, s: usize, k: usize) -> Result<Vec<f64>> {
    let mut x = prior.to_vec();
    let mut out = Vec::with_capacity(k * m.obs_dim());
    for j in 0..k {
        if j > 0 {
            x = m.a.matvec(&x)?;
            for (xi, bi) in x.iter_mut().zip(m.b.matvec(&traj.act(s + j))?) {
                *xi += bi;
            }
        }
        out.extend(m.c.matvec(&x)?);
    }
    Ok(out)
}

pub(crate) fn warn_if_unstable(m: &Lds) {
    let rho = m.spectral_radius();
    if rho >= 1.0 {
        warn!("spectral radius of A is {rho:.4} >= 1; the system is not stationary");
    }
}
