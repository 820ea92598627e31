use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureBlock, PcaProjector};
use crate::numerics::Mat;

/// Future window length `k` and history window length (both in steps).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureSpec {
    pub k: usize,
    pub history_len: usize,
}

impl FutureSpec {
    pub fn new(k: usize, history_len: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("future window k must be at least 1".into()));
        }
        Ok(FutureSpec { k, history_len })
    }
}

impl Default for FutureSpec {
    fn default() -> Self {
        FutureSpec {
            k: 10,
            history_len: 20,
        }
    }
}

/// How observation and action features are built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Random Fourier features with PCA to `p`.
    #[default]
    Rff,
    /// Exact one-hot features for discrete data, no compression.
    Indicator,
}

/// How the history window is featurized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryKind {
    /// RFF of the concatenated window, then PCA.
    #[default]
    Rff,
    /// The raw window with a constant appended, uncompressed.
    RawWindow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S1Mode {
    #[default]
    Joint,
    Conditional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// RFF frequencies per map (`D`); the feature dimension is `2D`.
    pub num_freq: usize,
    pub p: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Filter regularizer; `None` uses `lambda1`.
    pub lambda_filter: Option<f64>,
    pub seed: u64,
    pub features: FeatureKind,
    pub history: HistoryKind,
    pub s1: S1Mode,
    /// Trajectory count above which `q₀` is solved from first-step pairs;
    /// `None` uses `10 p`.
    pub n_min: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            num_freq: 2000,
            p: 20,
            lambda1: 1e-3,
            lambda2: 1e-3,
            lambda_filter: None,
            seed: 0,
            features: FeatureKind::Rff,
            history: HistoryKind::Rff,
            s1: S1Mode::Joint,
            n_min: None,
        }
    }
}

impl Hyperparams {
    pub fn lambda_filter(&self) -> f64 {
        self.lambda_filter.unwrap_or(self.lambda1)
    }

    pub fn n_min(&self) -> usize {
        self.n_min.unwrap_or(10 * self.p)
    }
}

/// Row of the raw extended-observation feature `ψ^o' ⊗ φ^o`.
pub const fn xi_obs_index(i_psi: usize, i_phi: usize, d_phi: usize) -> usize {
    i_psi * d_phi + i_phi
}

/// Row of the raw extended-action feature `φ^a ⊗ ψ^a'`.
pub const fn xi_act_index(i_phi: usize, i_psi: usize, d_psi: usize) -> usize {
    i_phi * d_psi + i_psi
}

/// A learned (or constructed) RFF-PSR.
///
/// Block dimensions are read from the stored matrices, so a model may use a
/// different size per block (the exact discrete embedding does).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RffPsrModel {
    pub spec: FutureSpec,
    pub hyper: Hyperparams,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub history: Option<FeatureBlock>,
    /// `φ^o`: single observations.
    pub obs: FeatureBlock,
    /// `φ^a`: single actions.
    pub act: FeatureBlock,
    /// `ψ^o`: windows of `k` observations.
    pub future_obs: FeatureBlock,
    /// `ψ^a`: windows of `k` actions.
    pub future_act: FeatureBlock,
    /// `U^o_ξ`: `(dψo·dφo) × pξo`.
    pub u_xi_obs: PcaProjector,
    /// `U^a_ξ`: `(dφa·dψa) × pξa`.
    pub u_xi_act: PcaProjector,
    /// `U^{oo}`: `(dφo·dφo) × poo`.
    pub u_oo: PcaProjector,
    /// `U^q`: `(dψo·dψa) × pq`.
    pub u_q: PcaProjector,
    /// `pξo·pξa × pq`.
    pub w_xi: Mat,
    /// `poo·dφa × pq`.
    pub w_o: Mat,
    /// `k·d_o × (pq·dψa + 1)`; the last column is an intercept.
    pub w_pred: Mat,
    pub q0: Vec<f64>,
    pub lambda_filter: f64,
    /// Eigen-clip the observation covariance at 0 before inversion.
    pub clip_obs_cov: bool,
}

impl RffPsrModel {
    pub fn state_dim(&self) -> usize {
        self.u_q.output_dim()
    }

    /// Checks that all stored blocks agree on their shared dimensions.
    pub fn validate(&self) -> Result<()> {
        let d_phi_o = self.obs.output_dim();
        let d_phi_a = self.act.output_dim();
        let d_psi_o = self.future_obs.output_dim();
        let d_psi_a = self.future_act.output_dim();
        let pq = self.state_dim();
        let checks = [
            (self.obs.input_dim() == self.obs_dim, "observation map input"),
            (self.act.input_dim() == self.act_dim, "action map input"),
            (self.future_obs.input_dim() == self.spec.k * self.obs_dim, "future observation map input"),
            (self.future_act.input_dim() == self.spec.k * self.act_dim, "future action map input"),
            (self.u_xi_obs.input_dim() == d_psi_o * d_phi_o, "U^o_xi rows"),
            (self.u_xi_act.input_dim() == d_phi_a * d_psi_a, "U^a_xi rows"),
            (self.u_oo.input_dim() == d_phi_o * d_phi_o, "U^oo rows"),
            (self.u_q.input_dim() == d_psi_o * d_psi_a, "U^q rows"),
            (
                self.w_xi.shape() == (self.u_xi_obs.output_dim() * self.u_xi_act.output_dim(), pq),
                "W_xi shape",
            ),
            (self.w_o.shape() == (self.u_oo.output_dim() * d_phi_a, pq), "W_o shape"),
            (
                self.w_pred.shape() == (self.spec.k * self.obs_dim, pq * d_psi_a + 1),
                "W_pred shape",
            ),
            (self.q0.len() == pq, "q0 length"),
            (self.lambda_filter >= 0.0, "lambda_filter sign"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidModel(format!("inconsistent {what}")));
            }
        }
        if self.q0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("q0 is not finite".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RffPsrModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}
