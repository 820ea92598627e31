use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numerics::{randomized_svd, Mat, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};

/// Orthonormal compression basis `U` (`input_dim × output_dim`); projection
/// is `Uᵀx`. PCA here is uncentered: the basis spans the leading left
/// singular vectors of the raw data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    pub basis: Mat,
}

impl PcaProjector {
    pub fn fit(data_columns: &Mat, p: usize, seed: u64) -> Result<Self> {
        let (basis, _) =
            randomized_svd(data_columns, p, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, seed)?;
        Ok(PcaProjector { basis })
    }

    /// Fits and returns the projected training columns alongside.
    pub fn fit_project(data_columns: &Mat, p: usize, seed: u64) -> Result<(Self, Mat)> {
        let (basis, proj) =
            randomized_svd(data_columns, p, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, seed)?;
        Ok((PcaProjector { basis }, proj))
    }

    pub fn identity(dim: usize) -> Self {
        PcaProjector {
            basis: Mat::identity(dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return dim_err(format!(
                "projector expects dimension {}, got {}",
                self.input_dim(),
                x.len()
            ));
        }
        self.basis.tr_matvec(x)
    }

    pub fn apply_columns(&self, x: &Mat) -> Result<Mat> {
        self.basis.tr_matmul(x)
    }

    /// Maps compressed coordinates back: `U z`.
    pub fn expand(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.basis.matvec(z)
    }
}
