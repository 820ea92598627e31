use log::warn;
use rayon::prelude::*;

use super::features::{q_seed, FeaturizedData};
use super::model::{FeatureKind, Hyperparams};
use crate::error::{Error, Result};
use crate::features::PcaProjector;
use crate::numerics::{khatri_rao, ridge_solve, sym_inverse, Mat, DEFAULT_PINV_TOL};

/// Stage-one estimates, one entry per featurized time step.
#[derive(Clone, Debug)]
pub struct S1Output {
    /// `Q̄_t`: `dψo × dψa`.
    pub q: Vec<Mat>,
    /// `P̄^ξ_t`: `pξo × pξa`.
    pub p_xi: Vec<Mat>,
    /// `P̄^o_t`: `poo × dφa`.
    pub p_o: Vec<Mat>,
    pub u_q: PcaProjector,
    /// Compressed states `q̄_t = U^qᵀ vec(Q̄_t)`, one per column.
    pub q_bar: Mat,
}

/// Per-column conditional operators `C_lr (C_rr + λI)⁻¹`, with the
/// covariances regressed from history features.
pub fn joint_operators(phi_h: &Mat, left: &Mat, right: &Mat, lambda: f64) -> Result<Vec<Mat>> {
    let (dl, dr) = (left.rows(), right.rows());
    let t_lr = ridge_solve(phi_h, &khatri_rao(left, right)?, lambda)?;
    let t_rr = ridge_solve(phi_h, &khatri_rao(right, right)?, lambda)?;
    let c_lr = t_lr.matmul(phi_h)?;
    let c_rr = t_rr.matmul(phi_h)?;
    let out: Vec<(Mat, bool)> = (0..phi_h.cols())
        .into_par_iter()
        .map(|t| {
            let lr = Mat::from_flat(dl, dr, &c_lr.col(t))?;
            let mut rr = Mat::from_flat(dr, dr, &c_rr.col(t))?.symmetrize();
            rr.add_diag(lambda);
            let (inv, fallback) = sym_inverse(&rr, DEFAULT_PINV_TOL)?;
            Ok((lr.matmul(&inv)?, fallback))
        })
        .collect::<Result<_>>()?;
    let fallbacks = out.iter().filter(|(_, f)| *f).count();
    if fallbacks > 0 {
        warn!("{fallbacks} action covariance estimates were singular; used pseudo-inverse");
    }
    Ok(out.into_iter().map(|(m, _)| m).collect())
}

/// Per-column operators from a single ridge regression of `left` on
/// `right ⋆ φ^h`, contracted with each `φ^h_t`.
pub fn conditional_operators(phi_h: &Mat, left: &Mat, right: &Mat, lambda: f64) -> Result<Vec<Mat>> {
    let (dl, dr, dh) = (left.rows(), right.rows(), phi_h.rows());
    let w = ridge_solve(&khatri_rao(right, phi_h)?, left, lambda)?;
    // Row-major `dl × (dr·dh)` is the same buffer as `(dl·dr) × dh`.
    let all = Mat::from_flat(dl * dr, dh, w.as_slice())?.matmul(phi_h)?;
    (0..phi_h.cols())
        .map(|t| Mat::from_flat(dl, dr, &all.col(t)))
        .collect()
}

fn finish(q: Vec<Mat>, p_xi: Vec<Mat>, p_o: Vec<Mat>, hyper: &Hyperparams) -> Result<S1Output> {
    let vec_q = stack_vec(&q)?;
    let (u_q, q_bar) = match hyper.features {
        FeatureKind::Rff => {
            if vec_q.cols() < hyper.p {
                return Err(Error::InvalidInput(format!(
                    "{} state samples are fewer than p = {}",
                    vec_q.cols(),
                    hyper.p
                )));
            }
            PcaProjector::fit_project(&vec_q, hyper.p, q_seed(hyper.seed))?
        }
        FeatureKind::Indicator => (PcaProjector::identity(vec_q.rows()), vec_q),
    };
    let out = S1Output {
        q,
        p_xi,
        p_o,
        u_q,
        q_bar,
    };
    if !out.q_bar.is_finite() || out.p_xi.iter().chain(&out.p_o).any(|m| !m.is_finite()) {
        return Err(Error::Numerical("stage-one estimates are not finite".into()));
    }
    Ok(out)
}

/// Stacks `vec(M_t)` as columns.
pub fn stack_vec(ms: &[Mat]) -> Result<Mat> {
    if ms.is_empty() {
        return Err(Error::InvalidInput("no stage-one samples".into()));
    }
    let rows = ms[0].rows() * ms[0].cols();
    let mut out = Mat::zeros(rows, ms.len());
    for (t, m) in ms.iter().enumerate() {
        out.set_col(t, m.as_slice());
    }
    Ok(out)
}

pub fn s1_joint(fd: &FeaturizedData, lambda1: f64, hyper: &Hyperparams) -> Result<S1Output> {
    let q = joint_operators(&fd.phi_h, &fd.psi_o, &fd.psi_a, lambda1)?;
    let p_xi = joint_operators(&fd.phi_h, &fd.xi_o, &fd.xi_a, lambda1)?;
    let p_o = joint_operators(&fd.phi_h, &fd.phi_oo, &fd.phi_a, lambda1)?;
    finish(q, p_xi, p_o, hyper)
}

pub fn s1_conditional(fd: &FeaturizedData, lambda1: f64, hyper: &Hyperparams) -> Result<S1Output> {
    let q = conditional_operators(&fd.phi_h, &fd.psi_o, &fd.psi_a, lambda1)?;
    let p_xi = conditional_operators(&fd.phi_h, &fd.xi_o, &fd.xi_a, lambda1)?;
    let p_o = conditional_operators(&fd.phi_h, &fd.phi_oo, &fd.phi_a, lambda1)?;
    finish(q, p_xi, p_o, hyper)
}
