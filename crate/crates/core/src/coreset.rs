//! Weighted training sets drawn by leverage-score or uniform sampling.
//!
//! A single coreset is drawn on the column space of the whole data matrix and
//! reused for every per-variable regression of a dependency network.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leverage::{
    draw_sampling_operator, embedding_distortion_with_svd, leverage_scores, recommended_size,
    sampling_probabilities, size_param_for_expected, SamplingOperator,
};
use crate::matrix::{thin_svd, DataMatrix, ThinSvd, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Leverage,
    Uniform,
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMethod::Leverage => "leverage",
            SamplingMethod::Uniform => "uniform",
        })
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leverage" => Ok(SamplingMethod::Leverage),
            "uniform" => Ok(SamplingMethod::Uniform),
            other => Err(Error::InvalidParameter(format!(
                "unknown sampling method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCoreset {
    pub data: DataMatrix,
    pub weights: Vec<f64>,
    pub source_indices: Vec<usize>,
    pub method: SamplingMethod,
    pub seed: u64,
}

/// Knobs for the leverage-score construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverageOptions {
    /// Absolute constant `D` in `k = D rho ln(rho / eps) / eps^2`.
    pub const_d: f64,
    /// Multiply `k` by `max(1, ln d)` so each of the `d` regressions fails
    /// with probability `O(1/d)`.
    pub boost_log_d: bool,
}

impl Default for LeverageOptions {
    fn default() -> Self {
        Self {
            const_d: 1.0,
            boost_log_d: false,
        }
    }
}

/// Statistics of one leverage draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoresetStats {
    pub size: usize,
    pub expected_size: f64,
    pub size_std: f64,
    pub size_param: f64,
    pub rank: usize,
    pub seed: u64,
    pub distortion: Option<f64>,
}

impl WeightedCoreset {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn from_operator(
        x: &DataMatrix,
        op: &SamplingOperator,
        method: SamplingMethod,
    ) -> Result<Self> {
        if op.origin_rows != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "sampling operator rows",
                expected: x.nrows(),
                found: op.origin_rows,
            });
        }
        let source_indices = op.indices();
        Ok(Self {
            data: x.select_rows(&source_indices)?,
            weights: op.weights(),
            source_indices,
            method,
            seed: op.seed,
        })
    }

    /// The sampling operator this coreset corresponds to on an `n`-row matrix.
    pub fn operator(&self, origin_rows: usize) -> SamplingOperator {
        SamplingOperator {
            selected: self
                .source_indices
                .iter()
                .copied()
                .zip(self.weights.iter().copied())
                .collect(),
            origin_rows,
            seed: self.seed,
        }
    }

    /// Writes `index,weight,<variables...>` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W, variable_names: Option<&[String]>) -> Result<()> {
        let d = self.data.ncols();
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "weight".to_string()];
        match variable_names {
            Some(names) if names.len() == d => header.extend(names.iter().cloned()),
            _ => header.extend((0..d).map(|j| format!("x{j}"))),
        }
        out.write_record(&header)?;
        for (r, (&idx, &w)) in self.source_indices.iter().zip(&self.weights).enumerate() {
            let mut rec = Vec::with_capacity(d + 2);
            rec.push(idx.to_string());
            rec.push(w.to_string());
            rec.extend((0..d).map(|j| self.data.get(r, j).to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`WeightedCoreset::write_csv`].
    pub fn read_csv<R: Read>(reader: R, method: SamplingMethod, seed: u64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = r + 2;
            if rec.len() < 3 {
                return Err(Error::Parse {
                    row,
                    col: rec.len() + 1,
                    message: "expected index, weight and at least one variable".into(),
                });
            }
            let field = |c: usize| -> Result<f64> {
                rec[c].trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    col: c + 1,
                    message: e.to_string(),
                })
            };
            let idx = rec[0].trim().parse::<usize>().map_err(|e| Error::Parse {
                row,
                col: 1,
                message: e.to_string(),
            })?;
            indices.push(idx);
            weights.push(field(1)?);
            rows.push((2..rec.len()).map(field).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self {
            data: DataMatrix::from_rows(&rows)?,
            weights,
            source_indices: indices,
            method,
            seed,
        })
    }
}

/// Thin SVD, leverage scores, `q_i = min(1, k l_i)` with `k` from
/// [`recommended_size`], then a Bernoulli draw.
pub fn build_leverage_coreset(
    x: &DataMatrix,
    eps: f64,
    seed: u64,
    options: LeverageOptions,
) -> Result<WeightedCoreset> {
    build_leverage_coreset_with_stats(x, eps, seed, options).map(|(c, _)| c)
}

pub fn build_leverage_coreset_with_stats(
    x: &DataMatrix,
    eps: f64,
    seed: u64,
    options: LeverageOptions,
) -> Result<(WeightedCoreset, CoresetStats)> {
    let svd = thin_svd(x, DEFAULT_RANK_TOL)?;
    let mut k = recommended_size(svd.rank(), eps, options.const_d)? as f64;
    if options.boost_log_d {
        k *= (x.ncols() as f64).ln().max(1.0);
    }
    draw_from_svd(x, &svd, k, seed)
}

/// Leverage coreset whose expected size `sum_i q_i` equals `target_size`.
pub fn build_leverage_coreset_of_size(
    x: &DataMatrix,
    target_size: usize,
    seed: u64,
) -> Result<(WeightedCoreset, CoresetStats)> {
    if target_size == 0 || target_size > x.nrows() {
        return Err(Error::InvalidParameter(format!(
            "target size must lie in [1, {}], got {target_size}",
            x.nrows()
        )));
    }
    let svd = thin_svd(x, DEFAULT_RANK_TOL)?;
    let scores = leverage_scores(&svd)?;
    let k = size_param_for_expected(&scores, target_size as f64)?;
    draw_from_svd(x, &svd, k, seed)
}

fn draw_from_svd(
    x: &DataMatrix,
    svd: &ThinSvd,
    k: f64,
    seed: u64,
) -> Result<(WeightedCoreset, CoresetStats)> {
    let scores = leverage_scores(svd)?;
    let q = sampling_probabilities(&scores, k.max(1.0));
    let op = draw_sampling_operator(&q, seed)?;
    let distortion = embedding_distortion_with_svd(svd, &op)?;
    let stats = CoresetStats {
        size: op.len(),
        expected_size: q.iter().sum(),
        size_std: q.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt(),
        size_param: k,
        rank: svd.rank(),
        seed,
        distortion: Some(distortion),
    };
    Ok((
        WeightedCoreset::from_operator(x, &op, SamplingMethod::Leverage)?,
        stats,
    ))
}

/// `m` distinct rows drawn uniformly without replacement, each weighted `n / m`.
pub fn build_uniform_coreset(x: &DataMatrix, m: usize, seed: u64) -> Result<WeightedCoreset> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "uniform sample size must lie in [1, {n}], got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    indices.sort_unstable();
    let weight = n as f64 / m as f64;
    Ok(WeightedCoreset {
        data: x.select_rows(&indices)?,
        weights: vec![weight; m],
        source_indices: indices,
        method: SamplingMethod::Uniform,
        seed,
    })
}
