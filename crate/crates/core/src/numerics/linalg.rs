use log::warn;
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Mat;
use crate::error::{dim_err, Error, Result};

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Column-wise Kronecker product. Row `i_a * b.rows() + i_b` of column `j`
/// holds `a[i_a, j] * b[i_b, j]`.
pub fn khatri_rao(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols() != b.cols() {
        return dim_err(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        ));
    }
    let (m, q, n) = (a.rows(), b.rows(), a.cols());
    let mut out = Mat::zeros(m * q, n);
    for ia in 0..m {
        let ra = a.row(ia);
        for ib in 0..q {
            let rb = b.row(ib);
            let dst = out.row_mut(ia * q + ib);
            for ((d, x), y) in dst.iter_mut().zip(ra).zip(rb) {
                *d = x * y;
            }
        }
    }
    Ok(out)
}

/// Thin SVD with singular values sorted in decreasing order.
pub fn svd_sorted(x: &Mat) -> (Mat, Vec<f64>, Mat) {
    let svd = x.to_nalgebra().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Mat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v_t = Mat::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]);
    (u, s, v_t)
}

fn orthonormalize(y: &Mat) -> Mat {
    let qr = y.to_nalgebra().qr();
    Mat::from_nalgebra(&qr.q())
}

/// Randomized range finder followed by an exact SVD of the small projected
/// matrix. Returns `(U, Uᵀx)` with `U` holding `p` orthonormal columns that
/// approximate the leading left singular subspace of `x`.
pub fn randomized_svd(
    x: &Mat,
    p: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<(Mat, Mat)> {
    let (m, n) = x.shape();
    if p > m.min(n) {
        return dim_err(format!("rank {p} exceeds min dimension of a {m}x{n} matrix"));
    }
    if p == 0 {
        return Ok((Mat::zeros(m, 0), Mat::zeros(0, n)));
    }
    let l = (p + oversample).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Mat::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(&x.matmul(&omega)?);
    for _ in 0..power_iters {
        let z = orthonormalize(&x.tr_matmul(&q)?);
        q = orthonormalize(&x.matmul(&z)?);
    }
    let b = q.tr_matmul(x)?;
    let (ub, _, _) = svd_sorted(&b);
    let ub = ub.select_columns(&(0..p).collect::<Vec<_>>());
    let u = q.matmul(&ub)?;
    let proj = u.tr_matmul(x)?;
    Ok((u, proj))
}

/// Moore-Penrose pseudo-inverse; singular values below `tol · σ_max` are
/// treated as zero.
pub fn pinv(x: &Mat, tol: f64) -> Mat {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Mat::zeros(n, m);
    }
    let (u, s, v_t) = svd_sorted(x);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Mat::zeros(n, m);
    }
    let cutoff = tol * smax;
    let mut out = Mat::zeros(n, m);
    for (k, sk) in s.iter().enumerate() {
        if *sk <= cutoff {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..n {
            let vi = v_t[(k, i)] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vi * u[(j, k)];
            }
        }
    }
    out
}

/// Ridge regression `W = Y Xᵀ (X Xᵀ + λI)⁻¹` over column samples, solved in
/// the `d_in × d_in` normal system by Cholesky. A singular normal matrix
/// falls back to the pseudo-inverse.
pub fn ridge_solve(inputs: &Mat, targets: &Mat, lambda: f64) -> Result<Mat> {
    if inputs.cols() != targets.cols() {
        return dim_err(format!(
            "ridge inputs have {} samples but targets have {}",
            inputs.cols(),
            targets.cols()
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let mut gram = inputs.matmul_tr(inputs)?;
    gram.add_diag(lambda);
    let cross = targets.matmul_tr(inputs)?;
    let d_in = inputs.rows();
    let g = gram.to_nalgebra();
    let w_t = match Cholesky::new(g) {
        Some(ch) if lambda > 0.0 || min_pivot_ok(&ch, d_in) => {
            let rhs = cross.transpose().to_nalgebra();
            Mat::from_nalgebra(&ch.solve(&rhs))
        }
        _ => {
            warn!("ridge normal matrix is singular (lambda = {lambda}); using pseudo-inverse");
            pinv(&gram, DEFAULT_PINV_TOL).matmul(&cross.transpose())?
        }
    };
    let w = w_t.transpose();
    if !w.is_finite() {
        return Err(Error::Numerical("ridge solution is not finite".into()));
    }
    Ok(w)
}

/// Ridge regression with an unpenalized intercept. Returns `[W | b]`
/// (`d_out × (d_in + 1)`) so that `y ≈ W x + b`.
pub fn ridge_solve_affine(inputs: &Mat, targets: &Mat, lambda: f64) -> Result<Mat> {
    if inputs.cols() != targets.cols() {
        return dim_err(format!(
            "ridge inputs have {} samples but targets have {}",
            inputs.cols(),
            targets.cols()
        ));
    }
    let n = inputs.cols();
    if n == 0 {
        return Err(Error::InvalidInput("ridge regression needs at least one sample".into()));
    }
    let mean = |m: &Mat| -> Vec<f64> { (0..m.rows()).map(|i| m.row(i).iter().sum::<f64>() / n as f64).collect() };
    let center = |m: &Mat, mu: &[f64]| Mat::from_fn(m.rows(), n, |i, j| m[(i, j)] - mu[i]);
    let (mx, my) = (mean(inputs), mean(targets));
    let w = ridge_solve(&center(inputs, &mx), &center(targets, &my), lambda)?;
    let wx = w.matvec(&mx)?;
    let d_in = inputs.rows();
    Ok(Mat::from_fn(targets.rows(), d_in + 1, |i, j| {
        if j < d_in {
            w[(i, j)]
        } else {
            my[i] - wx[i]
        }
    }))
}

fn min_pivot_ok(ch: &Cholesky<f64, nalgebra::Dyn>, n: usize) -> bool {
    let l = ch.l_dirty();
    let diag: Vec<f64> = (0..n).map(|i| l[(i, i)]).collect();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diag.iter().all(|d| d.abs() > 1e-7 * max)
}

/// Inverse of a symmetric matrix through its eigendecomposition. Returns the
/// inverse and whether eigenvalues below `rel_tol · max|λ|` had to be
/// dropped (pseudo-inverse fallback).
pub fn sym_inverse(m: &Mat, rel_tol: f64) -> Result<(Mat, bool)> {
    let n = m.rows();
    if m.cols() != n {
        return dim_err("symmetric inverse needs a square matrix");
    }
    if !m.is_finite() {
        return Err(Error::Numerical("matrix to invert is not finite".into()));
    }
    let eig = SymmetricEigen::new(m.to_nalgebra());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 {
        return Ok((Mat::zeros(n, n), true));
    }
    let cutoff = rel_tol * max;
    let mut fallback = false;
    let inv_vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|l| {
            if l.abs() <= cutoff {
                fallback = true;
                0.0
            } else {
                1.0 / l
            }
        })
        .collect();
    Ok((reconstruct(&eig.eigenvectors, &inv_vals), fallback))
}

/// Projects a symmetric matrix onto the PSD cone by zeroing negative
/// eigenvalues.
pub fn clip_psd(m: &Mat) -> Mat {
    clip_psd_eigen(m).0
}

/// [`clip_psd`] also returning the eigenvectors (as columns) and the
/// unclipped eigenvalues.
pub(crate) fn clip_psd_eigen(m: &Mat) -> (Mat, Mat, Vec<f64>) {
    let eig = SymmetricEigen::new(m.to_nalgebra());
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let vals: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let n = m.rows();
    let vecs = Mat::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)]);
    (reconstruct(&eig.eigenvectors, &vals), vecs, raw)
}

/// Pulls a symmetric gradient `g` with respect to `clip_psd(X)` back to
/// `X`, given the eigendecomposition of `X`: `V (F ∘ VᵀgV) Vᵀ` with
/// divided differences of `max(·, 0)` in `F`.
pub(crate) fn clip_psd_backward(vecs: &Mat, vals: &[f64], g: &Mat) -> Result<Mat> {
    let inner = vecs.tr_matmul(g)?.matmul(vecs)?;
    let n = vals.len();
    let f = |x: f64| x.max(0.0);
    let scaled = Mat::from_fn(n, n, |i, j| {
        let (a, b) = (vals[i], vals[j]);
        let d = if a != b {
            (f(a) - f(b)) / (a - b)
        } else if a > 0.0 {
            1.0
        } else {
            0.0
        };
        d * inner[(i, j)]
    });
    vecs.matmul(&scaled)?.matmul_tr(vecs)
}

fn reconstruct(vecs: &DMatrix<f64>, vals: &[f64]) -> Mat {
    let n = vecs.nrows();
    let mut out = Mat::zeros(n, n);
    for (k, l) in vals.iter().enumerate() {
        if *l == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = vecs[(i, k)] * l;
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    out
}
