//! Feature maps for observations, actions and windows of them.
//!
//! A [`FeatureBlock`] pairs a raw feature map (random Fourier features, exact
//! indicators for discrete data, or the raw vector) with a PCA projector.

mod pca;
mod rff;

pub use pca::PcaProjector;
pub use rff::{median_bandwidth, RffMap, DEFAULT_MAX_PAIRS};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numerics::{kron, Mat};

/// Indicator (delta-kernel) features of a vector made of one-hot segments.
///
/// The output is the Kronecker product of the per-segment indicators, i.e. a
/// one-hot encoding of the joint assignment. With `pad`, an all-zero segment
/// maps to an extra "absent" slot; without it, an all-zero segment zeroes
/// the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMap {
    pub segments: Vec<usize>,
    pub pad: bool,
}

impl IndicatorMap {
    pub fn input_dim(&self) -> usize {
        self.segments.iter().sum()
    }

    pub fn output_dim(&self) -> usize {
        let extra = usize::from(self.pad);
        self.segments.iter().map(|s| s + extra).product()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return dim_err(format!(
                "indicator map expects dimension {}, got {}",
                self.input_dim(),
                x.len()
            ));
        }
        let mut out = vec![1.0];
        let mut offset = 0;
        for &len in &self.segments {
            let seg = &x[offset..offset + len];
            offset += len;
            let width = len + usize::from(self.pad);
            let mut ind = vec![0.0; width];
            let hot = seg
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            match hot {
                Some(i) => ind[i] = 1.0,
                None if self.pad => ind[len] = 1.0,
                None => {}
            }
            out = kron(&out, &ind);
        }
        Ok(out)
    }
}

/// Identity features, optionally with an appended constant 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMap {
    pub input_dim: usize,
    pub bias: bool,
}

impl RawMap {
    pub fn output_dim(&self) -> usize {
        self.input_dim + usize::from(self.bias)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return dim_err(format!(
                "raw map expects dimension {}, got {}",
                self.input_dim,
                x.len()
            ));
        }
        let mut out = x.to_vec();
        if self.bias {
            out.push(1.0);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureMap {
    Rff(RffMap),
    Indicator(IndicatorMap),
    Raw(RawMap),
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => m.input_dim,
            FeatureMap::Indicator(m) => m.input_dim(),
            FeatureMap::Raw(m) => m.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => m.output_dim(),
            FeatureMap::Indicator(m) => m.output_dim(),
            FeatureMap::Raw(m) => m.output_dim(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureMap::Rff(m) => m.apply(x),
            FeatureMap::Indicator(m) => m.apply(x),
            FeatureMap::Raw(m) => m.apply(x),
        }
    }

    pub fn apply_columns(&self, x: &Mat) -> Result<Mat> {
        if let FeatureMap::Rff(m) = self {
            return m.apply_columns(x);
        }
        if x.rows() != self.input_dim() {
            return dim_err(format!(
                "feature map expects dimension {}, got {}",
                self.input_dim(),
                x.rows()
            ));
        }
        let cols = (0..x.cols())
            .map(|j| self.apply(&x.col(j)))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(Mat::zeros(self.output_dim(), 0));
        }
        Mat::from_columns(&cols)
    }
}

/// A feature map followed by its projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub map: FeatureMap,
    pub projection: PcaProjector,
}

impl FeatureBlock {
    /// Builds an RFF block on the training columns `raw`: median-trick
    /// bandwidth, `num_freq` frequencies, then PCA to `p` dimensions when
    /// `p` is given. Returns the block and the projected training features.
    pub fn fit_rff(raw: &Mat, num_freq: usize, p: Option<usize>, seed: u64) -> Result<(Self, Mat)> {
        let bandwidth = if raw.rows() == 0 {
            1.0
        } else {
            median_bandwidth(raw, DEFAULT_MAX_PAIRS, seed ^ 0x6d65_6469_616e)?
        };
        let map = FeatureMap::Rff(RffMap::new(raw.rows(), num_freq, bandwidth, seed)?);
        Self::fit_with(map, raw, p, seed)
    }

    /// Wraps an arbitrary map, fitting PCA to `p` dimensions when given.
    pub fn fit_with(map: FeatureMap, raw: &Mat, p: Option<usize>, seed: u64) -> Result<(Self, Mat)> {
        let feats = map.apply_columns(raw)?;
        match p {
            Some(p) => {
                let (projection, proj) = PcaProjector::fit_project(&feats, p, seed ^ 0x7063_61)?;
                Ok((FeatureBlock { map, projection }, proj))
            }
            None => {
                let projection = PcaProjector::identity(map.output_dim());
                Ok((FeatureBlock { map, projection }, feats))
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        self.projection.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.projection.apply(&self.map.apply(x)?)
    }

    pub fn apply_columns(&self, x: &Mat) -> Result<Mat> {
        self.projection.apply_columns(&self.map.apply_columns(x)?)
    }
}
