//! The RFF-PSR recursive filter, window prediction and multi-horizon
//! evaluation.

mod eval;

pub use eval::{
    evaluate_predictor, rollout_eval, target_count, HorizonError, KalmanPredictor, OraclePredictor,
    WindowPredictor, ZeroPredictor,
};

use log::warn;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{clip_psd_eigen, kron, sym_inverse, Mat, DEFAULT_PINV_TOL};
use crate::two_stage::{xi_act_index, xi_obs_index, RffPsrModel};

/// Intermediate values of one filter step, kept for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    pub(crate) p_xi: Mat,
    pub(crate) m_inv: Mat,
    pub(crate) v: Vec<f64>,
    pub(crate) a: Mat,
    pub(crate) b: Mat,
    /// Eigenvectors and raw eigenvalues of the covariance, when clipped.
    pub(crate) clip: Option<(Mat, Vec<f64>)>,
}

/// One filter step from precomputed `φ^o_t`, `φ^a_t`.
pub(crate) fn forward_step(
    m: &RffPsrModel,
    q: &[f64],
    phi_o: &[f64],
    phi_a: &[f64],
    lambda: f64,
    clip: bool,
) -> Result<(Vec<f64>, StepCache)> {
    let (d_phi_o, d_phi_a) = (phi_o.len(), phi_a.len());
    let (d_psi_o, d_psi_a) = (m.future_obs.output_dim(), m.future_act.output_dim());
    let (p_xo, p_xa) = (m.u_xi_obs.output_dim(), m.u_xi_act.output_dim());
    if q.len() != m.state_dim() {
        return dim_err(format!("state has length {}, model expects {}", q.len(), m.state_dim()));
    }
    let check = |ok: bool, what: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(format!("non-finite value in filter step: {what}")))
        }
    };

    let p_xi = Mat::from_vec(p_xo, p_xa, m.w_xi.matvec(q)?)
        .map_err(|_| Error::Numerical("non-finite value in filter step: extended state".into()))?;
    let p_o = Mat::from_flat(m.u_oo.output_dim(), d_phi_a, &m.w_o.matvec(q)?)?;
    check(p_o.is_finite(), "observation extended state")?;

    let c = p_o.matvec(phi_a)?;
    let mut cov = Mat::from_flat(d_phi_o, d_phi_o, &m.u_oo.expand(&c)?)?.symmetrize();
    let mut clip_eig = None;
    if clip {
        let (clipped, vecs, vals) = clip_psd_eigen(&cov);
        cov = clipped;
        clip_eig = Some((vecs, vals));
    }
    cov.add_diag(lambda);
    check(cov.is_finite(), "observation covariance")?;
    let (m_inv, fallback) = sym_inverse(&cov, DEFAULT_PINV_TOL)?;
    if fallback {
        warn!("observation covariance is ill-conditioned; using pseudo-inverse");
    }
    let v = m_inv.matvec(phi_o)?;
    check(v.iter().all(|x| x.is_finite()), "conditioned observation")?;

    let uo = &m.u_xi_obs.basis;
    let mut a = Mat::zeros(d_psi_o, p_xo);
    for i in 0..d_psi_o {
        let row = a.row_mut(i);
        for (j, vj) in v.iter().enumerate() {
            for (dst, u) in row.iter_mut().zip(uo.row(xi_obs_index(i, j, d_phi_o))) {
                *dst += u * vj;
            }
        }
    }
    let ua = &m.u_xi_act.basis;
    let mut b = Mat::zeros(d_psi_a, p_xa);
    for l in 0..d_psi_a {
        let row = b.row_mut(l);
        for (j, fj) in phi_a.iter().enumerate() {
            for (dst, u) in row.iter_mut().zip(ua.row(xi_act_index(j, l, d_psi_a))) {
                *dst += u * fj;
            }
        }
    }
    let q_full = a.matmul(&p_xi)?.matmul_tr(&b)?;
    let q_next = m.u_q.apply(q_full.as_slice())?;
    check(q_next.iter().all(|x| x.is_finite()), "next state")?;
    Ok((
        q_next,
        StepCache {
            p_xi,
            m_inv,
            v,
            a,
            b,
            clip: clip_eig,
        },
    ))
}

/// Conditions the state on `(o_t, a_t)` and shifts it one step forward.
pub fn filter_update(
    m: &RffPsrModel,
    q: &[f64],
    obs: &[f64],
    act: &[f64],
    lambda_filter: f64,
) -> Result<Vec<f64>> {
    let phi_o = m.obs.apply(obs)?;
    let phi_a = m.act.apply(act)?;
    Ok(forward_step(m, q, &phi_o, &phi_a, lambda_filter, m.clip_obs_cov)?.0)
}

/// Prediction input `[kron(q, ψ^a); 1]`.
pub(crate) fn prediction_input(q: &[f64], psi_a: &[f64]) -> Vec<f64> {
    let mut x = kron(q, psi_a);
    x.push(1.0);
    x
}

/// Predicts `o_{t..t+k}` (step-major, `k·d_o` values) from the state and
/// the `k` future actions (step-major, `k·d_a` values).
pub fn predict_window(m: &RffPsrModel, q: &[f64], future_actions: &[f64]) -> Result<Vec<f64>> {
    let want = m.spec.k * m.act_dim;
    if future_actions.len() != want {
        return dim_err(format!(
            "prediction needs {want} action values (k = {}), got {}",
            m.spec.k,
            future_actions.len()
        ));
    }
    if q.len() != m.state_dim() {
        return dim_err(format!("state has length {}, model expects {}", q.len(), m.state_dim()));
    }
    let psi_a = m.future_act.apply(future_actions)?;
    m.w_pred.matvec(&prediction_input(q, &psi_a))
}
