//! Dense matrices and the numeric kernels the rest of the crate is built on.
//!
//! [`DataMatrix`] holds `n` observations (rows) over `d` variables (columns)
//! as 64-bit reals. Every entry is finite; constructors reject anything else.

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default relative threshold below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Default relative tolerance for [`spectral_norm`].
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-9;

const SVD_MAX_ITER: usize = 10_000;
const POWER_MAX_ITER: usize = 20_000;

/// An `n x d` matrix of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    inner: DMatrix<f64>,
}

impl DataMatrix {
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::EmptyMatrix {
                rows: inner.nrows(),
                cols: inner.ncols(),
            });
        }
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    /// Builds a matrix from a row-major slice.
    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "row-major values",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_slice(n, d, &flat)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n.max(1), n.max(1)),
        }
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inner.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.inner.column(j).iter().copied().collect()
    }

    /// Rows in row-major order, one `Vec` per observation.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.row(i)).collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Copies the listed rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyMatrix {
                rows: 0,
                cols: self.ncols(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.nrows()) {
            return Err(Error::DimensionMismatch {
                what: "row index bound",
                expected: self.nrows(),
                found: bad,
            });
        }
        Ok(Self {
            inner: self.inner.select_rows(indices),
        })
    }

    /// Applies `f` to every entry; fails if any result is non-finite.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::from_matrix(self.inner.map(f))
    }

    /// Whether every entry is a non-negative integer.
    pub fn is_count_data(&self) -> bool {
        self.inner.iter().all(|&v| v >= 0.0 && v.fract() == 0.0)
    }
}

/// Thin singular value decomposition `X = U diag(sigma) Vt` truncated to the numerical rank.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `n x rank`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Strictly positive, non-increasing.
    pub singular_values: Vec<f64>,
    /// `rank x d`, orthonormal rows.
    pub vt: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.vt
    }
}

fn full_svd(m: DMatrix<f64>, compute_uv: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m, compute_uv, compute_uv, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::SvdNotConverged)
}

/// Thin SVD keeping singular values greater than `rank_tol * sigma_max`.
///
/// An all-zero matrix has rank zero and is rejected with [`Error::ZeroRank`].
pub fn thin_svd(x: &DataMatrix, rank_tol: f64) -> Result<ThinSvd> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rank tolerance must be positive, got {rank_tol}"
        )));
    }
    let svd = full_svd(x.as_matrix().clone(), true)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Err(Error::ZeroRank);
    }
    let cutoff = rank_tol * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    let u = svd.u.as_ref().ok_or(Error::SvdNotConverged)?;
    let vt = svd.v_t.as_ref().ok_or(Error::SvdNotConverged)?;
    Ok(ThinSvd {
        u: u.columns(0, rank).into_owned(),
        singular_values: svd.singular_values.iter().take(rank).copied().collect(),
        vt: vt.rows(0, rank).into_owned(),
    })
}

pub fn frobenius_norm(x: &DataMatrix) -> f64 {
    x.as_matrix().norm()
}

/// Largest singular value of `a`, computed by power iteration on the smaller Gram matrix.
///
/// Stops once the estimate changes by less than `tol` (relative) for three
/// consecutive iterations.
pub fn spectral_norm(a: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("spectral norm input".into()));
    }
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    let dim = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut v = DVector::from_fn(dim, |_, _| rng.random::<f64>() + 0.5);
    v.normalize_mut();

    let mut estimate = 0.0_f64;
    let mut stable = 0;
    for _ in 0..POWER_MAX_ITER {
        let w = &gram * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = w / norm;
        let next = lambda.max(0.0).sqrt();
        if (next - estimate).abs() <= tol * next {
            stable += 1;
            if stable >= 3 {
                return Ok(next);
            }
        } else {
            stable = 0;
        }
        estimate = next;
    }
    Err(Error::SpectralNormNotConverged {
        estimate,
        iterations: POWER_MAX_ITER,
    })
}

/// Minimiser of `sum_i w_i (a_i . gamma - b_i)^2`.
///
/// Rank-deficient problems return the minimum-norm minimiser: singular values of
/// `diag(sqrt(w)) A` below `DEFAULT_RANK_TOL * sigma_max` are dropped.
pub fn solve_weighted_least_squares(a: &DataMatrix, b: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    weighted_least_squares(a.as_matrix(), b, w)
}

pub(crate) fn weighted_least_squares(a: &DMatrix<f64>, b: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let p = a.ncols();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: n,
            found: b.len(),
        });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            what: "weight length",
            expected: n,
            found: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "weight {i} must be finite and non-negative, got {}",
            w[i]
        )));
    }
    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one weight must be positive".into(),
        ));
    }

    let m = active.len();
    let mut scaled = DMatrix::zeros(m, p);
    let mut rhs = DVector::zeros(m);
    for (r, &i) in active.iter().enumerate() {
        let s = w[i].sqrt();
        for j in 0..p {
            scaled[(r, j)] = s * a[(i, j)];
        }
        rhs[r] = s * b[i];
    }

    // Reduce tall systems to p x p through QR before the SVD.
    let (core, core_rhs) = if m > p {
        let qr = scaled.qr();
        let mut qtb = rhs;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, p).into_owned())
    } else {
        (scaled, rhs)
    };

    let svd = full_svd(core, true)?;
    let u = svd.u.as_ref().ok_or(Error::SvdNotConverged)?;
    let vt = svd.v_t.as_ref().ok_or(Error::SvdNotConverged)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = DEFAULT_RANK_TOL * sigma_max;

    let mut gamma = DVector::zeros(p);
    if sigma_max > 0.0 {
        let utb = u.transpose() * &core_rhs;
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff {
                gamma += vt.row(k).transpose() * (utb[k] / s);
            }
        }
    }
    Ok(gamma.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
        let gram = u.transpose() * u;
        let id = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
        (gram - id).amax()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            DataMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            DataMatrix::from_row_slice(0, 2, &[]),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn svd_of_identity() {
        let svd = thin_svd(&DataMatrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 3);
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-12);
        }
        // U is a signed permutation of I_3
        for i in 0..3 {
            let row_norm: f64 = svd.u.row(i).iter().map(|v| v * v).sum();
            assert!((row_norm - 1.0).abs() < 1e-12);
        }
        assert!(orthonormality_error(&svd.u) < 1e-8);
    }

    #[test]
    fn svd_of_stacked_scaled_identity() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = DataMatrix::from_row_slice(4, 2, &[h, 0.0, 0.0, h, h, 0.0, 0.0, h]).unwrap();
        let svd = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 2);
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((svd.singular_values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_zero_rank() {
        let x = DataMatrix::from_row_slice(2, 2, &[0.0; 4]).unwrap();
        assert!(matches!(
            thin_svd(&x, DEFAULT_RANK_TOL),
            Err(Error::ZeroRank)
        ));
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..200 * 50).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = DataMatrix::from_row_slice(200, 50, &vals).unwrap();
        let svd = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 50);
        let err = (svd.reconstruct() - x.as_matrix()).norm();
        assert!(err <= 1e-8 * frobenius_norm(&x));
        assert!(orthonormality_error(&svd.u) < 1e-8);
        assert!(orthonormality_error(&svd.vt.transpose()) < 1e-8);
        for pair in svd.singular_values.windows(2) {
            assert!(pair[0] >= pair[1] && pair[1] > 0.0);
        }
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&DataMatrix::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        let zero = DataMatrix::from_row_slice(2, 3, &[0.0; 6]).unwrap();
        assert_eq!(frobenius_norm(&zero), 0.0);
        let x = DataMatrix::from_row_slice(1, 2, &[3.0, 4.0]).unwrap();
        assert!((frobenius_norm(&x) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_examples() {
        let tol = DEFAULT_SPECTRAL_TOL;
        assert!((spectral_norm(&DMatrix::identity(3, 3), tol).unwrap() - 1.0).abs() < 1e-9);
        let d = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 2.0]);
        assert!((spectral_norm(&d, tol).unwrap() - 5.0).abs() < 1e-8);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((spectral_norm(&swap, tol).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DMatrix::zeros(2, 2), tol).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_matches_svd_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = DMatrix::from_fn(7, 4, |_, _| rng.random::<f64>() - 0.5);
            let exact = a.clone().singular_values().max();
            let power = spectral_norm(&a, 1e-12).unwrap();
            assert!((power - exact).abs() <= 1e-7 * exact, "{power} vs {exact}");
        }
    }

    #[test]
    fn wls_examples() {
        let a = DataMatrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let g = solve_weighted_least_squares(&a, &[2.0, 4.0], &[1.0, 1.0]).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12);
        let g = solve_weighted_least_squares(&a, &[2.0, 4.0], &[3.0, 1.0]).unwrap();
        assert!((g[0] - 2.5).abs() < 1e-12);
        let id = DataMatrix::identity(2);
        let g = solve_weighted_least_squares(&id, &[7.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!((g[0] - 7.0).abs() < 1e-12 && (g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn wls_rejects_bad_weights() {
        let a = DataMatrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        assert!(solve_weighted_least_squares(&a, &[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(solve_weighted_least_squares(&a, &[1.0, 2.0], &[-1.0, 1.0]).is_err());
        assert!(solve_weighted_least_squares(&a, &[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn wls_rank_deficient_is_minimum_norm() {
        // Two identical columns: every (g1, g2) with g1 + g2 = 2 fits; min norm is (1, 1).
        let a = DataMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let g = solve_weighted_least_squares(&a, &[2.0, 4.0, 6.0], &[1.0, 2.0, 1.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-10 && (g[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wls_zero_weight_rows_ignored() {
        let a = DataMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]).unwrap();
        let g = solve_weighted_least_squares(&a, &[2.0, 4.0, 1000.0], &[1.0, 1.0, 0.0]).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12);
    }
}
