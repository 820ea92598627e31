use super::features::FeaturizedData;
use super::s1::{stack_vec, S1Output};
use crate::error::{Error, Result};
use crate::numerics::{khatri_rao, ridge_solve, ridge_solve_affine, Mat};

/// Regresses vectorized extended states on compressed states. Returns
/// `(W_ξ, W_o)`.
pub fn s2_regress(s1: &S1Output, lambda2: f64) -> Result<(Mat, Mat)> {
    let pq = s1.q_bar.rows();
    if s1.q_bar.cols() < pq {
        return Err(Error::InvalidInput(format!(
            "{} state samples are fewer than the state dimension {pq}",
            s1.q_bar.cols()
        )));
    }
    let w_xi = ridge_solve(&s1.q_bar, &stack_vec(&s1.p_xi)?, lambda2)?;
    let w_o = ridge_solve(&s1.q_bar, &stack_vec(&s1.p_o)?, lambda2)?;
    Ok((w_xi, w_o))
}

/// Initial state. With at least `n_min` trajectories, solves
/// `ψ^o ≈ Q₀ ψ^a` over first-step pairs and compresses; otherwise averages
/// all `q̄`.
pub fn estimate_q0(s1: &S1Output, fd: &FeaturizedData, n_min: usize, lambda: f64) -> Result<Vec<f64>> {
    if fd.n_trajectories >= n_min.max(1) {
        let cols = fd.first_step_columns();
        if !cols.is_empty() {
            let q0 = ridge_solve(&fd.psi_a.select_columns(&cols), &fd.psi_o.select_columns(&cols), lambda)?;
            return s1.u_q.apply(q0.as_slice());
        }
    }
    mean_columns(&s1.q_bar)
}

pub fn mean_columns(m: &Mat) -> Result<Vec<f64>> {
    if m.cols() == 0 {
        return Err(Error::InvalidInput("no state estimates to average".into()));
    }
    let n = m.cols() as f64;
    Ok((0..m.rows()).map(|i| m.row(i).iter().sum::<f64>() / n).collect())
}

/// Ridge regression from `kron(q̄_t, ψ^a_t)` (plus an unpenalized
/// intercept) to raw future observation windows.
pub fn train_w_pred(s1: &S1Output, fd: &FeaturizedData, lambda2: f64) -> Result<Mat> {
    ridge_solve_affine(&khatri_rao(&s1.q_bar, &fd.psi_a)?, &fd.obs_windows, lambda2)
}
