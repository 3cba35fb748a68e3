//! Leverage scores, Bernoulli row sampling and subspace-embedding checks.
//!
//! For a data matrix `X` with thin SVD `X = U S Vt` of rank `rho`, the leverage
//! score of row `i` is `|U_i|^2 / rho`, so the scores sum to one. Given a size
//! parameter `k`, row `i` is kept independently with probability
//! `q_i = min(1, k l_i)` and reweighted by `1 / q_i`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{thin_svd, DataMatrix, ThinSvd, DEFAULT_RANK_TOL};

#[derive(Debug, Clone)]
pub struct LeverageProfile {
    pub scores: Vec<f64>,
    pub rank: usize,
    pub size_param: f64,
    pub probabilities: Vec<f64>,
}

impl LeverageProfile {
    pub fn new(svd: &ThinSvd, size_param: f64) -> Result<Self> {
        let scores = leverage_scores(svd)?;
        let probabilities = sampling_probabilities(&scores, size_param);
        Ok(Self {
            scores,
            rank: svd.rank(),
            size_param,
            probabilities,
        })
    }

    /// Expected number of sampled rows, `sum_i q_i`.
    pub fn expected_size(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Standard deviation of the sampled row count.
    pub fn size_std(&self) -> f64 {
        self.probabilities
            .iter()
            .map(|q| q * (1.0 - q))
            .sum::<f64>()
            .sqrt()
    }
}

/// Squared row norms of `U` divided by the rank.
pub fn leverage_scores(svd: &ThinSvd) -> Result<Vec<f64>> {
    let rank = svd.rank();
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    let rho = rank as f64;
    Ok((0..svd.u.nrows())
        .map(|i| svd.u.row(i).norm_squared() / rho)
        .collect())
}

/// `q_i = min(1, k l_i)`. `k` should be at least one.
pub fn sampling_probabilities(scores: &[f64], size_param: f64) -> Vec<f64> {
    debug_assert!(size_param >= 1.0);
    scores
        .iter()
        .map(|&l| {
            if l > 0.0 {
                (size_param * l).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// `ceil(D rho ln(rho / eps) / eps^2)`, the sample-size parameter for an
/// `eps`-subspace embedding. `eps` must lie in `(0, 1/2)`.
pub fn recommended_size(rank: usize, eps: f64, const_d: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, 1/2), got {eps}"
        )));
    }
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    if !(const_d > 0.0) || !const_d.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "size constant D must be positive, got {const_d}"
        )));
    }
    let rho = rank as f64;
    let k = (const_d * rho * (rho / eps).ln() / (eps * eps)).ceil();
    Ok((k as usize).max(1))
}

/// Size parameter `k` for which `sum_i min(1, k l_i)` equals `target`.
///
/// The expected size is monotone in `k`, so this bisects. Targets at or above
/// the number of rows with positive score return the smallest saturating `k`.
pub fn size_param_for_expected(scores: &[f64], target: f64) -> Result<f64> {
    let positive: Vec<f64> = scores.iter().copied().filter(|&l| l > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::ZeroRank);
    }
    if !(target >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target expected size must be at least 1, got {target}"
        )));
    }
    let min_score = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let saturating = 1.0 / min_score;
    if target >= positive.len() as f64 {
        return Ok(saturating);
    }
    let expected = |k: f64| positive.iter().map(|&l| (k * l).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (1.0_f64.min(target), saturating.max(target));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi.max(1.0))
}

/// A diagonal sampling matrix stored sparsely as `(row, weight)` pairs, where
/// `weight = 1 / q_i = S_ii^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingOperator {
    pub selected: Vec<(usize, f64)>,
    pub origin_rows: usize,
    pub seed: u64,
}

impl SamplingOperator {
    /// The operator that keeps every row with weight one.
    pub fn identity(rows: usize) -> Self {
        Self {
            selected: (0..rows).map(|i| (i, 1.0)).collect(),
            origin_rows: rows,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.selected.iter().map(|&(i, _)| i).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.selected.iter().map(|&(_, w)| w).collect()
    }

    /// `|S X gamma|^2`.
    pub fn sketched_sq_norm(&self, x: &DataMatrix, gamma: &[f64]) -> f64 {
        let m = x.as_matrix();
        self.selected
            .iter()
            .map(|&(i, w)| {
                let dot: f64 = (0..m.ncols()).map(|j| m[(i, j)] * gamma[j]).sum();
                w * dot * dot
            })
            .sum()
    }
}

/// Includes row `i` independently with probability `q_i`.
///
/// Deterministic in `seed`. Returns [`Error::EmptyDraw`] when nothing is
/// selected so the caller can redraw.
pub fn draw_sampling_operator(probabilities: &[f64], seed: u64) -> Result<SamplingOperator> {
    if let Some(i) = probabilities
        .iter()
        .position(|&q| !(0.0..=1.0).contains(&q))
    {
        return Err(Error::InvalidParameter(format!(
            "probability {i} outside [0, 1]: {}",
            probabilities[i]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::new();
    for (i, &q) in probabilities.iter().enumerate() {
        let u: f64 = rng.random();
        if q > 0.0 && u < q {
            selected.push((i, 1.0 / q));
        }
    }
    if selected.is_empty() {
        return Err(Error::EmptyDraw);
    }
    Ok(SamplingOperator {
        selected,
        origin_rows: probabilities.len(),
        seed,
    })
}

/// Spectral norm of `U^T S^T S U - I`, the smallest `eps` for which `S` is an
/// `eps`-subspace embedding of the column space of `X`.
pub fn embedding_distortion(x: &DataMatrix, op: &SamplingOperator) -> Result<f64> {
    let svd = thin_svd(x, DEFAULT_RANK_TOL)?;
    embedding_distortion_with_svd(&svd, op)
}

pub fn embedding_distortion_with_svd(svd: &ThinSvd, op: &SamplingOperator) -> Result<f64> {
    if op.origin_rows != svd.u.nrows() {
        return Err(Error::DimensionMismatch {
            what: "sampling operator rows",
            expected: svd.u.nrows(),
            found: op.origin_rows,
        });
    }
    let rho = svd.rank();
    let mut gram = DMatrix::<f64>::zeros(rho, rho);
    for &(i, w) in &op.selected {
        let row = svd.u.row(i);
        gram.ger(w, &row.transpose(), &row.transpose(), 1.0);
    }
    for j in 0..rho {
        gram[(j, j)] -= 1.0;
    }
    // symmetric: the spectral norm is the largest |eigenvalue|
    let eig = gram
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::SvdNotConverged)?;
    Ok(eig
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs())))
}
