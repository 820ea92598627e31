use crate::datagen::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::filter::{forward_step, prediction_input, StepCache};
use crate::numerics::{clip_psd_backward, dot, Mat};
use crate::two_stage::{xi_obs_index, RffPsrModel};

/// Gradients of the summed squared prediction error with respect to the
/// four refined parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w_xi: Mat,
    pub w_o: Mat,
    pub w_pred: Mat,
    pub q0: Vec<f64>,
    /// Summed squared error.
    pub loss: f64,
    /// Number of predicted scalars contributing to `loss`.
    pub count: usize,
}

impl Gradients {
    pub fn zeros(m: &RffPsrModel) -> Self {
        Gradients {
            w_xi: Mat::zeros(m.w_xi.rows(), m.w_xi.cols()),
            w_o: Mat::zeros(m.w_o.rows(), m.w_o.cols()),
            w_pred: Mat::zeros(m.w_pred.rows(), m.w_pred.cols()),
            q0: vec![0.0; m.q0.len()],
            loss: 0.0,
            count: 0,
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        self.w_xi.axpy(1.0, &other.w_xi);
        self.w_o.axpy(1.0, &other.w_o);
        self.w_pred.axpy(1.0, &other.w_pred);
        for (a, b) in self.q0.iter_mut().zip(&other.q0) {
            *a += b;
        }
        self.loss += other.loss;
        self.count += other.count;
    }

    pub fn scale(&mut self, s: f64) {
        self.w_xi = self.w_xi.scale(s);
        self.w_o = self.w_o.scale(s);
        self.w_pred = self.w_pred.scale(s);
        self.q0.iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm_sq(&self) -> f64 {
        self.w_xi.frobenius_norm().powi(2)
            + self.w_o.frobenius_norm().powi(2)
            + self.w_pred.frobenius_norm().powi(2)
            + dot(&self.q0, &self.q0)
    }

    pub fn is_finite(&self) -> bool {
        self.w_xi.is_finite()
            && self.w_o.is_finite()
            && self.w_pred.is_finite()
            && self.q0.iter().all(|v| v.is_finite())
            && self.loss.is_finite()
    }
}

struct Step {
    q: Vec<f64>,
    psi_a: Vec<f64>,
    target: Vec<f64>,
    phi_a: Vec<f64>,
    cache: Option<StepCache>,
}

/// Total squared error of the window predictions along one trajectory and
/// its exact gradient, backpropagated through every filter step, including
/// the eigenvalue clip of the observation covariance when the model uses it.
pub fn bptt_gradients(m: &RffPsrModel, traj: &Trajectory, lambda_filter: f64) -> Result<Gradients> {
    let k = m.spec.k;
    if traj.len() < k {
        return dim_err(format!("trajectory of length {} has no window of length {k}", traj.len()));
    }
    let n = traj.len() - k + 1;

    let mut steps: Vec<Step> = Vec::with_capacity(n);
    let mut q = m.q0.clone();
    let mut grads = Gradients::zeros(m);
    for s in 0..n {
        let psi_a = m.future_act.apply(&traj.act_window(s as isize, k))?;
        let target = traj.obs_window(s as isize, k);
        let phi_a = m.act.apply(&traj.act(s))?;
        let (next, cache) = if s + 1 < n {
            let phi_o = m.obs.apply(&traj.obs(s))?;
            let (next, cache) = forward_step(m, &q, &phi_o, &phi_a, lambda_filter, m.clip_obs_cov)?;
            (Some(next), Some(cache))
        } else {
            (None, None)
        };
        steps.push(Step {
            q: std::mem::take(&mut q),
            psi_a,
            target,
            phi_a,
            cache,
        });
        if let Some(next) = next {
            q = next;
        }
    }

    let d_psi_a = m.future_act.output_dim();
    let d_phi_o = m.obs.output_dim();
    let d_phi_a = m.act.output_dim();
    let d_psi_o = m.future_obs.output_dim();
    let mut g_next: Option<Vec<f64>> = None;
    for (s, st) in steps.iter().enumerate().rev() {
        let mut g_q = vec![0.0; st.q.len()];

        // Prediction loss at this window.
        let x = prediction_input(&st.q, &st.psi_a);
        let pred = m.w_pred.matvec(&x)?;
        let resid: Vec<f64> = pred.iter().zip(&st.target).map(|(p, t)| p - t).collect();
        grads.loss += dot(&resid, &resid);
        grads.count += resid.len();
        let g_pred: Vec<f64> = resid.iter().map(|r| 2.0 * r).collect();
        for (i, gp) in g_pred.iter().enumerate() {
            if *gp == 0.0 {
                continue;
            }
            for (g, xv) in grads.w_pred.row_mut(i).iter_mut().zip(&x) {
                *g += gp * xv;
            }
        }
        let g_x = m.w_pred.tr_matvec(&g_pred)?;
        for (i, gq) in g_q.iter_mut().enumerate() {
            *gq += dot(&g_x[i * d_psi_a..(i + 1) * d_psi_a], &st.psi_a);
        }

        // Filter step s: q_s -> q_{s+1}.
        if let (Some(gn), Some(c)) = (g_next.take(), st.cache.as_ref()) {
            let g_qfull = Mat::from_vec(d_psi_o, d_psi_a, m.u_q.expand(&gn)?)?;
            let g_a = g_qfull.matmul(&c.b)?.matmul_tr(&c.p_xi)?;
            let g_pxi = c.a.tr_matmul(&g_qfull)?.matmul(&c.b)?;
            let uo = &m.u_xi_obs.basis;
            let mut g_v = vec![0.0; d_phi_o];
            for i in 0..d_psi_o {
                let ga = g_a.row(i);
                for (j, gv) in g_v.iter_mut().enumerate() {
                    *gv += dot(uo.row(xi_obs_index(i, j, d_phi_o)), ga);
                }
            }
            let w = c.m_inv.matvec(&g_v)?;
            let mut g_m = Mat::zeros(d_phi_o, d_phi_o);
            for i in 0..d_phi_o {
                for j in 0..d_phi_o {
                    g_m[(i, j)] = -w[i] * c.v[j];
                }
            }
            let mut g_m = g_m.symmetrize();
            if let Some((vecs, vals)) = &c.clip {
                g_m = clip_psd_backward(vecs, vals, &g_m)?;
            }
            let g_c = m.u_oo.apply(g_m.as_slice())?;
            let mut g_po = Mat::zeros(g_c.len(), d_phi_a);
            for (i, gc) in g_c.iter().enumerate() {
                for (dst, fa) in g_po.row_mut(i).iter_mut().zip(&st.phi_a) {
                    *dst = gc * fa;
                }
            }
            for (i, gv) in g_pxi.as_slice().iter().enumerate() {
                if *gv != 0.0 {
                    for (dst, qv) in grads.w_xi.row_mut(i).iter_mut().zip(&st.q) {
                        *dst += gv * qv;
                    }
                }
            }
            for (i, gv) in g_po.as_slice().iter().enumerate() {
                if *gv != 0.0 {
                    for (dst, qv) in grads.w_o.row_mut(i).iter_mut().zip(&st.q) {
                        *dst += gv * qv;
                    }
                }
            }
            for (gq, v) in g_q.iter_mut().zip(m.w_xi.tr_matvec(g_pxi.as_slice())?) {
                *gq += v;
            }
            for (gq, v) in g_q.iter_mut().zip(m.w_o.tr_matvec(g_po.as_slice())?) {
                *gq += v;
            }
        }
        if g_q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at step {s}")));
        }
        g_next = Some(g_q);
    }
    grads.q0 = g_next.unwrap_or_else(|| vec![0.0; m.q0.len()]);
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok(grads)
}
