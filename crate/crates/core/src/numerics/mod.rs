//! Dense linear algebra used throughout the crate.
//!
//! Matrices are row-major and tensors use the last-mode-fastest layout, so a
//! `vec` of a `p×q` matrix indexes entry `(i, j)` at `i·q + j` and the
//! Kronecker product of `a` and `b` indexes `(i_a, i_b)` at `i_a·|b| + i_b`.

mod linalg;
mod mat;
mod tensor;

pub(crate) use linalg::{clip_psd_backward, clip_psd_eigen};
pub use linalg::{
    clip_psd, khatri_rao, pinv, randomized_svd, ridge_solve, ridge_solve_affine, svd_sorted,
    sym_inverse,
    DEFAULT_OVERSAMPLE, DEFAULT_PINV_TOL, DEFAULT_POWER_ITERS,
};
pub use mat::{dot, kron, norm, Mat};
pub use tensor::Tensor;
