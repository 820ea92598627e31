use serde::{Deserialize, Serialize};

use super::Mat;
use crate::error::{dim_err, Result};

/// Dense tensor with row-major (last mode fastest) layout:
/// `index = Σ_i idx_i · Π_{j>i} size_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return dim_err(format!(
                "{} entries cannot fill tensor of shape {shape:?}",
                data.len()
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, s)| {
                debug_assert!(i < s);
                acc * s + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Unfolds into a matrix whose rows run over modes `..split` and
    /// columns over modes `split..`; a pure reinterpretation of the buffer.
    pub fn to_mat(&self, split: usize) -> Mat {
        let rows = self.shape[..split].iter().product();
        let cols = self.shape[split..].iter().product();
        Mat::from_flat(rows, cols, &self.data).expect("shape product matches buffer")
    }

    /// Contracts mode `mode` against the columns of `m`: the result has
    /// `m.rows()` entries along that mode.
    pub fn mode_multiply(&self, m: &Mat, mode: usize) -> Result<Tensor> {
        if mode >= self.shape.len() {
            return dim_err(format!("mode {mode} out of range for order {}", self.shape.len()));
        }
        if m.cols() != self.shape[mode] {
            return dim_err(format!(
                "matrix with {} columns cannot contract mode of size {}",
                m.cols(),
                self.shape[mode]
            ));
        }
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let (n_in, n_out) = (self.shape[mode], m.rows());
        let mut shape = self.shape.clone();
        shape[mode] = n_out;
        let mut out = vec![0.0; outer * n_out * inner];
        for a in 0..outer {
            let src = &self.data[a * n_in * inner..(a + 1) * n_in * inner];
            let dst = &mut out[a * n_out * inner..(a + 1) * n_out * inner];
            for r in 0..n_out {
                let mrow = m.row(r);
                let d = &mut dst[r * inner..(r + 1) * inner];
                for (c, w) in mrow.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let s = &src[c * inner..(c + 1) * inner];
                    for (x, y) in d.iter_mut().zip(s) {
                        *x += w * y;
                    }
                }
            }
        }
        Ok(Tensor { shape, data: out })
    }

    /// Contracts mode `mode` with a vector, removing that mode.
    pub fn contract_vec(&self, v: &[f64], mode: usize) -> Result<Tensor> {
        let t = self.mode_multiply(&Mat::from_flat(1, v.len(), v)?, mode)?;
        let mut shape = t.shape.clone();
        shape.remove(mode);
        Ok(Tensor {
            shape,
            data: t.data,
        })
    }
}
