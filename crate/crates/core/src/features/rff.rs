use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Mat;

pub const DEFAULT_MAX_PAIRS: usize = 100_000;

/// Random Fourier feature map for the Gaussian kernel
/// `k(x, y) = exp(-‖x - y‖² / (2 s²))`.
///
/// Output is `D^{-1/2} [cos(ω_1ᵀx), sin(ω_1ᵀx), …, cos(ω_Dᵀx), sin(ω_Dᵀx)]`,
/// which has unit norm for every input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub input_dim: usize,
    pub num_freq: usize,
    pub bandwidth: f64,
    pub seed: u64,
    /// `D × input_dim`, rows drawn from `N(0, s⁻² I)`.
    pub frequencies: Mat,
}

impl RffMap {
    pub fn new(input_dim: usize, num_freq: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if num_freq == 0 {
            return Err(Error::InvalidInput("RFF map needs at least one frequency".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies = Mat::from_fn(num_freq, input_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / bandwidth
        });
        Ok(RffMap {
            input_dim,
            num_freq,
            bandwidth,
            seed,
            frequencies,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.num_freq
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let proj = self.frequencies.matvec(x)?;
        let scale = (self.num_freq as f64).sqrt().recip();
        let mut out = Vec::with_capacity(2 * self.num_freq);
        for w in proj {
            let (s, c) = w.sin_cos();
            out.push(c * scale);
            out.push(s * scale);
        }
        Ok(out)
    }

    /// Applies the map to every column of a `input_dim × n` matrix.
    pub fn apply_columns(&self, x: &Mat) -> Result<Mat> {
        if x.rows() != self.input_dim {
            return dim_err(format!(
                "RFF map expects inputs of dimension {}, got {}",
                self.input_dim,
                x.rows()
            ));
        }
        let proj = self.frequencies.matmul(x)?;
        let scale = (self.num_freq as f64).sqrt().recip();
        let n = x.cols();
        let mut out = Mat::zeros(2 * self.num_freq, n);
        for i in 0..self.num_freq {
            let src = proj.row(i).to_vec();
            for (j, w) in src.iter().enumerate() {
                let (s, c) = w.sin_cos();
                out[(2 * i, j)] = c * scale;
                out[(2 * i + 1, j)] = s * scale;
            }
        }
        Ok(out)
    }
}

/// Median Euclidean distance between distinct columns of `points`.
///
/// Uses every unordered pair when there are at most `max_pairs` of them,
/// otherwise `max_pairs` pairs drawn uniformly. Pairs of coincident points
/// (distance exactly zero) are skipped, so duplicating the point set leaves
/// the exhaustive median unchanged.
pub fn median_bandwidth(points: &Mat, max_pairs: usize, seed: u64) -> Result<f64> {
    let n = points.cols();
    if n < 2 {
        return Err(Error::InvalidInput("median bandwidth needs at least two points".into()));
    }
    let cols: Vec<Vec<f64>> = (0..n).map(|j| points.col(j)).collect();
    let dist = |i: usize, j: usize| -> f64 {
        cols[i]
            .iter()
            .zip(&cols[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let total = n * (n - 1) / 2;
    let mut d: Vec<f64> = Vec::with_capacity(total.min(max_pairs));
    if total <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                d.push(dist(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            d.push(dist(i, j));
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return Err(Error::DegenerateBandwidth);
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    Ok(med)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;

    fn gauss_kernel(x: &[f64], y: &[f64], s: f64) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * s * s)).exp()
    }

    fn random_points(d: usize, n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn median_of_three_points() {
        let pts = Mat::from_rows(&[&[0.0, 1.0, 2.0]]);
        assert_eq!(median_bandwidth(&pts, DEFAULT_MAX_PAIRS, 0).unwrap(), 1.0);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = Mat::from_rows(&[&[0.5, 0.5], &[1.0, 1.0]]);
        assert!(matches!(
            median_bandwidth(&pts, DEFAULT_MAX_PAIRS, 0),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn median_matches_exhaustive_enumeration() {
        let pts = random_points(3, 200, 4);
        let mut all = Vec::new();
        for i in 0..200 {
            for j in 0..i {
                let (a, b) = (pts.col(i), pts.col(j));
                all.push(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        all.sort_by(f64::total_cmp);
        let want = 0.5 * (all[all.len() / 2 - 1] + all[all.len() / 2]);
        assert_eq!(median_bandwidth(&pts, DEFAULT_MAX_PAIRS, 1).unwrap(), want);
    }

    #[test]
    fn median_invariant_to_permutation_and_duplication() {
        let pts = random_points(2, 31, 5);
        let base = median_bandwidth(&pts, DEFAULT_MAX_PAIRS, 0).unwrap();
        let perm: Vec<usize> = (0..31).map(|i| (i * 7) % 31).collect();
        let shuffled = pts.select_columns(&perm);
        assert_eq!(median_bandwidth(&shuffled, DEFAULT_MAX_PAIRS, 0).unwrap(), base);
        let doubled = pts.hstack(&pts).unwrap();
        assert_eq!(median_bandwidth(&doubled, DEFAULT_MAX_PAIRS, 0).unwrap(), base);
    }

    #[test]
    fn sampled_median_is_close_to_exhaustive() {
        let pts = random_points(3, 600, 6);
        let exact = median_bandwidth(&pts, usize::MAX, 0).unwrap();
        let sampled = median_bandwidth(&pts, 20_000, 0).unwrap();
        assert!((exact - sampled).abs() / exact < 0.02);
    }

    #[test]
    fn rff_output_has_unit_norm() {
        let map = RffMap::new(3, 50, 0.7, 1).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.5], [100.0, 0.1, -7.0]] {
            let f = map.apply(&x).unwrap();
            assert_eq!(f.len(), 100);
            assert!((dot(&f, &f) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rff_self_inner_product_is_one() {
        let map = RffMap::new(2, 64, 1.3, 9).unwrap();
        let f = map.apply(&[0.3, -0.4]).unwrap();
        assert!((dot(&f, &f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rff_approximates_kernel_with_high_probability() {
        let x = [0.2, -0.1];
        let y = [0.2 + 0.6, -0.1 + 0.8]; // distance 1
        let want = (-0.5f64).exp();
        let hits = (0..100)
            .filter(|seed| {
                let map = RffMap::new(2, 2000, 1.0, *seed).unwrap();
                let k = dot(&map.apply(&x).unwrap(), &map.apply(&y).unwrap());
                (k - want).abs() <= 0.05
            })
            .count();
        assert!(hits >= 99, "only {hits}/100 seeds within tolerance");
    }

    #[test]
    fn rff_error_shrinks_with_more_frequencies() {
        let pts = random_points(3, 200, 12);
        let s = 1.5;
        let medians: Vec<f64> = [100, 400, 1600]
            .iter()
            .map(|&d| {
                let map = RffMap::new(3, d, s, 77).unwrap();
                let feats = map.apply_columns(&pts).unwrap();
                let mut errs: Vec<f64> = (0..100)
                    .map(|i| {
                        let (a, b) = (2 * i, 2 * i + 1);
                        let k = dot(&feats.col(a), &feats.col(b));
                        (k - gauss_kernel(&pts.col(a), &pts.col(b), s)).abs()
                    })
                    .collect();
                errs.sort_by(f64::total_cmp);
                0.5 * (errs[49] + errs[50])
            })
            .collect();
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    #[test]
    fn apply_columns_matches_apply() {
        let map = RffMap::new(2, 10, 0.5, 3).unwrap();
        let pts = random_points(2, 4, 8);
        let cols = map.apply_columns(&pts).unwrap();
        for j in 0..4 {
            let f = map.apply(&pts.col(j)).unwrap();
            for (a, b) in f.iter().zip(cols.col(j)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_input_gives_constant_features() {
        let map = RffMap::new(0, 5, 1.0, 0).unwrap();
        let f = map.apply(&[]).unwrap();
        let c = 5f64.sqrt().recip();
        assert_eq!(f, vec![c, 0.0, c, 0.0, c, 0.0, c, 0.0, c, 0.0]);
    }
}
