use super::iohmm::{iohmm_extended_obs, IoHmm};
use crate::error::Result;
use crate::features::{FeatureBlock, FeatureMap, IndicatorMap, PcaProjector};
use crate::numerics::{pinv, Mat, DEFAULT_PINV_TOL};
use crate::two_stage::{FeatureKind, FutureSpec, Hyperparams, RffPsrModel};

fn indicator(segments: Vec<usize>) -> FeatureBlock {
    let map = FeatureMap::Indicator(IndicatorMap {
        segments,
        pad: false,
    });
    let dim = map.output_dim();
    FeatureBlock {
        map,
        projection: PcaProjector::identity(dim),
    }
}

/// The RFF-PSR whose filter is exact Bayes filtering for `m`: one-hot
/// features, identity projections, and operators built from `O^k` and
/// `O^{k+1}`. Requires `O^k` to have full column rank in the state mode
/// (k-observability).
pub fn iohmm_embedding(m: &IoHmm, k: usize, lambda_filter: f64) -> Result<RffPsrModel> {
    let (n_s, n_o, n_a) = (m.n_states(), m.n_obs(), m.n_actions());
    let (wo, wa) = (n_o.pow(k as u32), n_a.pow(k as u32));
    let ok = iohmm_extended_obs(m, k)?;
    let ok1 = iohmm_extended_obs(m, k + 1)?;

    // Each state's predictive and extended quantities, as columns.
    let e_q = Mat::from_fn(wo * wa, n_s, |r, s| ok.get(&[r / wa, s, r % wa]));
    let (d_xo, d_xa) = (wo * n_o, n_a * wa);
    let e_xi = Mat::from_fn(d_xo * d_xa, n_s, |r, s| {
        let (xo, xa) = (r / d_xa, r % d_xa);
        // ξ^o = (o_{t+1..t+k}, o_t); the full window puts o_t first.
        let (w_next, o) = (xo / n_o, xo % n_o);
        ok1.get(&[o * wo + w_next, s, xa])
    });
    let e_o = Mat::from_fn(n_o * n_o * n_a, n_s, |r, s| {
        let (oo, a) = (r / n_a, r % n_a);
        let (o1, o2) = (oo / n_o, oo % n_o);
        if o1 == o2 {
            m.emit(o1, s, a)
        } else {
            0.0
        }
    });
    let e_q_pinv = pinv(&e_q, DEFAULT_PINV_TOL);
    let w_xi = e_xi.matmul(&e_q_pinv)?;
    let w_o = e_o.matmul(&e_q_pinv)?;

    // E[one-hot o_{t+j}] = Σ_w Q[w, v] [digit_j(w) = i] for action window v.
    let mut w_pred = Mat::zeros(k * n_o, wo * wa * wa + 1);
    for w in 0..wo {
        for j in 0..k {
            let digit = (w / n_o.pow((k - 1 - j) as u32)) % n_o;
            for v in 0..wa {
                w_pred[(j * n_o + digit, (w * wa + v) * wa + v)] = 1.0;
            }
        }
    }
    let q0 = e_q.matvec(m.initial())?;

    let hyper = Hyperparams {
        features: FeatureKind::Indicator,
        p: wo * wa,
        lambda1: lambda_filter,
        lambda2: 0.0,
        lambda_filter: Some(lambda_filter),
        ..Hyperparams::default()
    };
    let model = RffPsrModel {
        spec: FutureSpec { k, history_len: 0 },
        hyper,
        obs_dim: n_o,
        act_dim: n_a,
        history: None,
        obs: indicator(vec![n_o]),
        act: indicator(vec![n_a]),
        future_obs: indicator(vec![n_o; k]),
        future_act: indicator(vec![n_a; k]),
        u_xi_obs: PcaProjector::identity(d_xo),
        u_xi_act: PcaProjector::identity(d_xa),
        u_oo: PcaProjector::identity(n_o * n_o),
        u_q: PcaProjector::identity(wo * wa),
        w_xi,
        w_o,
        w_pred,
        q0,
        lambda_filter,
        clip_obs_cov: true,
    };
    model.validate()?;
    Ok(model)
}
