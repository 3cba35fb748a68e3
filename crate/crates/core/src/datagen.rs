//! Seeded generators for synthetic data sets.
//!
//! - Gaussian data from an acyclic planted linear model, optionally with a few
//!   rows whose noise is blown up to give them high leverage.
//! - Log-normal Poisson counts, `y ~ Poi(exp(x g + v))`, `v ~ N(-s^2/2, s^2)`.
//! - The unit-roots polygon on which every Poisson data point is essential.
//! - The stacked scaled identity, whose leverage scores are all equal.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::poisson_nll_log_domain;
use crate::matrix::DataMatrix;

/// Default cap on the number of rows [`generate_stacked_identity`] may build.
pub const DEFAULT_MAX_STACKED_ROWS: usize = 1 << 22;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal `n x d` matrix.
pub fn random_gaussian_matrix(n: usize, d: usize, seed: u64) -> Result<DataMatrix> {
    let mut rng = rng_from_seed(seed);
    let values: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    DataMatrix::from_row_slice(n, d, &values)
}

/// `x_i = intercept_i + sum_{j<i} weights[(i, j)] x_j + noise_i`.
///
/// Variables without planted parents are exogenous with unit variance; the
/// others receive `Normal(0, noise_sd^2)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedLinearModel {
    pub intercepts: Vec<f64>,
    pub weights: DMatrix<f64>,
}

impl PlantedLinearModel {
    pub fn new(intercepts: Vec<f64>, weights: DMatrix<f64>) -> Result<Self> {
        let d = intercepts.len();
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "planted model needs at least two variables, got {d}"
            )));
        }
        if weights.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                what: "planted weight matrix",
                expected: d,
                found: weights.nrows(),
            });
        }
        for i in 0..d {
            for j in i..d {
                if weights[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "planted weights must be strictly lower triangular; ({i}, {j}) is {}",
                        weights[(i, j)]
                    )));
                }
            }
        }
        Ok(Self {
            intercepts,
            weights,
        })
    }

    /// Each lower-triangular entry is non-zero with probability `edge_prob`,
    /// drawn uniformly from `+-[0.3, 1.0]`; intercepts are uniform on `[-1, 1]`.
    pub fn random(d: usize, edge_prob: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let intercepts: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut weights = DMatrix::zeros(d, d);
        for i in 1..d {
            for j in 0..i {
                if rng.random::<f64>() < edge_prob {
                    let mag: f64 = rng.random_range(0.3..1.0);
                    weights[(i, j)] = if rng.random::<bool>() { mag } else { -mag };
                }
            }
        }
        Self::new(intercepts, weights)
    }

    pub fn dim(&self) -> usize {
        self.intercepts.len()
    }

    fn is_root(&self, i: usize) -> bool {
        (0..i).all(|j| self.weights[(i, j)] == 0.0)
    }

    pub fn means(&self) -> Vec<f64> {
        let d = self.dim();
        let mut mu = vec![0.0; d];
        for i in 0..d {
            mu[i] = self.intercepts[i] + (0..i).map(|j| self.weights[(i, j)] * mu[j]).sum::<f64>();
        }
        mu
    }
}

fn ancestral_sample(
    model: &PlantedLinearModel,
    noise_sd: f64,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    let d = model.dim();
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        let sd = if model.is_root(i) { 1.0 } else { noise_sd };
        out[i] = model.intercepts[i]
            + (0..i).map(|j| model.weights[(i, j)] * out[j]).sum::<f64>()
            + noise_scale * sd * z;
    }
}

/// `n` rows drawn ancestrally from `model`.
pub fn generate_gaussian_dn_data(
    model: &PlantedLinearModel,
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<DataMatrix> {
    generate_heavy_leverage_data(model, n, noise_sd, 0, 1.0, seed)
}

/// Like [`generate_gaussian_dn_data`], but `outliers` randomly placed rows have
/// every noise term multiplied by `scale`, giving them large leverage while
/// still following the planted model.
pub fn generate_heavy_leverage_data(
    model: &PlantedLinearModel,
    n: usize,
    noise_sd: f64,
    outliers: usize,
    scale: f64,
    seed: u64,
) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise standard deviation must be non-negative, got {noise_sd}"
        )));
    }
    if outliers > n {
        return Err(Error::InvalidParameter(format!(
            "cannot place {outliers} outliers in {n} rows"
        )));
    }
    let d = model.dim();
    let mut rng = rng_from_seed(seed);
    let mut heavy = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, outliers) {
        heavy[i] = true;
    }
    let mut values = vec![0.0; n * d];
    for (r, row) in values.chunks_mut(d).enumerate() {
        let s = if heavy[r] { scale } else { 1.0 };
        ancestral_sample(model, noise_sd, s, &mut rng, row);
    }
    DataMatrix::from_row_slice(n, d, &values)
}

/// Counts `y_i ~ Poi(exp(x_i g + v_i))` with `v_i ~ N(-sigma^2/2, sigma^2)`, so
/// that `E[y_i | x_i] = exp(x_i g)`. `sigma = 0` is the plain Poisson model.
pub fn generate_lognormal_poisson(
    x: &DataMatrix,
    gamma: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if gamma.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "coefficient length",
            expected: x.ncols(),
            found: gamma.len(),
        });
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let noise = if sigma > 0.0 {
        Some(
            Normal::new(-0.5 * sigma * sigma, sigma)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?,
        )
    } else {
        None
    };
    let m = x.as_matrix();
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = (0..x.ncols()).map(|j| m[(i, j)] * gamma[j]).sum();
            let v = noise.as_ref().map_or(0.0, |dist| dist.sample(&mut rng));
            let rate = (eta + v).exp();
            if rate == 0.0 {
                return Ok(0.0);
            }
            Poisson::new(rate)
                .map(|p| p.sample(&mut rng))
                .map_err(|e| Error::NonFiniteValue(format!("Poisson rate {rate} at row {i}: {e}")))
        })
        .collect()
}

/// Correlated counts for Poisson networks: one latent factor `z ~ N(0, 1)` per
/// row and `x_ij ~ log-normal Poisson(exp(a_j + b_j z))` with random `a_j`, `b_j`.
pub fn generate_count_data(n: usize, d: usize, sigma: f64, seed: u64) -> Result<DataMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyMatrix { rows: n, cols: d });
    }
    let mut rng = rng_from_seed(seed);
    let base: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.2)).collect();
    let loading: Vec<f64> = (0..d).map(|_| rng.random_range(-0.6..0.6)).collect();
    let latent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let design =
        DataMatrix::from_matrix(DMatrix::from_fn(
            n,
            2,
            |i, j| {
                if j == 0 {
                    1.0
                } else {
                    latent[i]
                }
            },
        ))?;
    let mut values = DMatrix::zeros(n, d);
    for j in 0..d {
        let col = generate_lognormal_poisson(
            &design,
            &[base[j], loading[j]],
            sigma,
            seed.wrapping_add(1 + j as u64),
        )?;
        values.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    DataMatrix::from_matrix(values)
}

/// The regular `n`-gon instance on which a Poisson likelihood query reveals
/// whether a single point is present.
///
/// Vertex `i` is `(r cos(2 pi i / n), r sin(2 pi i / n), -1)` with
/// `r = n / (1 - cos(2 pi / n))`, and query `j` is
/// `(cos(2 pi j / n), sin(2 pi j / n), r cos(2 pi / n))`. Only vertices with
/// `bits[i]` set are data points; every count is one.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub n: usize,
    pub radius: f64,
    pub bits: Vec<bool>,
    /// All `n` candidate points, present or not.
    pub vertices: DataMatrix,
    /// The `n` query vectors, one per row.
    pub queries: DataMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: usize,
    pub bit: bool,
    pub log_nll: f64,
    /// Log NLL after removing point `query` from the data (equal to `log_nll` when absent).
    pub log_nll_without: f64,
    pub classified_present: bool,
    pub classified_present_without: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n: usize,
    pub radius: f64,
    pub log_threshold: f64,
    pub present_lower_bound: f64,
    pub absent_upper_bound: f64,
    pub min_present_log_nll: Option<f64>,
    pub max_absent_log_nll: Option<f64>,
    pub queries: Vec<QueryOutcome>,
}

impl SeparationReport {
    /// Whether every present query clears `n/2`, every absent query stays below
    /// `ln(4 n^4)`, and removing any present point flips its classification.
    pub fn separated(&self) -> bool {
        self.min_present_log_nll
            .is_none_or(|v| v >= self.present_lower_bound)
            && self
                .max_absent_log_nll
                .is_none_or(|v| v <= self.absent_upper_bound)
            && self
                .queries
                .iter()
                .all(|q| q.classified_present == q.bit && !q.classified_present_without)
    }
}

impl HardInstance {
    pub fn present_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.bits[i]).collect()
    }

    pub fn query(&self, j: usize) -> Vec<f64> {
        self.queries.row(j)
    }

    /// Present points as an `m x 3` matrix with all-ones counts, or `None` if no bit is set.
    pub fn data(&self) -> Option<(DataMatrix, Vec<f64>)> {
        let present = self.present_indices();
        if present.is_empty() {
            return None;
        }
        let x = self.vertices.select_rows(&present).ok()?;
        Some((x, vec![1.0; present.len()]))
    }

    /// `ln l(gamma_j)` over the present points, optionally leaving one point out.
    /// Returns `-inf` when no point remains.
    pub fn log_nll(&self, j: usize, exclude: Option<usize>) -> Result<f64> {
        let rows: Vec<usize> = self
            .present_indices()
            .into_iter()
            .filter(|&i| Some(i) != exclude)
            .collect();
        if rows.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let x = self.vertices.select_rows(&rows)?;
        let ones = vec![1.0; rows.len()];
        poisson_nll_log_domain(&self.query(j), &x, &ones, &ones)
    }

    /// `ln(exp(n/4) 2 n^2)`: a query whose NLL exceeds this reveals a present point.
    pub fn log_threshold(&self) -> f64 {
        let n = self.n as f64;
        n / 4.0 + (2.0 * n * n).ln()
    }

    pub fn separation_report(&self) -> Result<SeparationReport> {
        let n = self.n as f64;
        let threshold = self.log_threshold();
        let mut queries = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let log_nll = self.log_nll(j, None)?;
            let log_nll_without = self.log_nll(j, Some(j))?;
            queries.push(QueryOutcome {
                query: j,
                bit: self.bits[j],
                log_nll,
                log_nll_without,
                classified_present: log_nll > threshold,
                classified_present_without: log_nll_without > threshold,
            });
        }
        let fold = |present: bool| {
            queries
                .iter()
                .filter(|q| q.bit == present)
                .map(|q| q.log_nll)
                .reduce(if present { f64::min } else { f64::max })
        };
        Ok(SeparationReport {
            n: self.n,
            radius: self.radius,
            log_threshold: threshold,
            present_lower_bound: n / 2.0,
            absent_upper_bound: (4.0 * n.powi(4)).ln(),
            min_present_log_nll: fold(true),
            max_absent_log_nll: fold(false),
            queries,
        })
    }

    /// Writes the present points as CSV: `index,x,y,bias,count`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["index", "x", "y", "bias", "count"])?;
        for i in self.present_indices() {
            let row = self.vertices.row(i);
            out.write_record([
                i.to_string(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
                "1".to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the polygon instance. Bits are drawn uniformly from `seed` when not given.
pub fn generate_hard_instance(
    n: usize,
    bits: Option<Vec<bool>>,
    seed: u64,
) -> Result<HardInstance> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "the polygon needs at least three vertices, got {n}"
        )));
    }
    let bits = match bits {
        Some(b) if b.len() != n => {
            return Err(Error::DimensionMismatch {
                what: "bit vector length",
                expected: n,
                found: b.len(),
            })
        }
        Some(b) => b,
        None => {
            let mut rng = rng_from_seed(seed);
            (0..n).map(|_| rng.random::<bool>()).collect()
        }
    };
    let nf = n as f64;
    let step = 2.0 * PI / nf;
    let radius = nf / (1.0 - step.cos());
    let vertices = DMatrix::from_fn(n, 3, |i, c| {
        let angle = step * i as f64;
        match c {
            0 => radius * angle.cos(),
            1 => radius * angle.sin(),
            _ => -1.0,
        }
    });
    let queries = DMatrix::from_fn(n, 3, |j, c| {
        let angle = step * j as f64;
        match c {
            0 => angle.cos(),
            1 => angle.sin(),
            _ => radius * step.cos(),
        }
    });
    Ok(HardInstance {
        n,
        radius,
        bits,
        vertices: DataMatrix::from_matrix(vertices)?,
        queries: DataMatrix::from_matrix(queries)?,
    })
}

/// `d^m x d` matrix stacking `I_d / sqrt(d^(m-1))` `d^(m-1)` times.
pub fn generate_stacked_identity(d: usize, m: u32, max_rows: usize) -> Result<DataMatrix> {
    if d < 2 || m < 1 {
        return Err(Error::InvalidParameter(format!(
            "stacked identity needs d >= 2 and m >= 1, got d = {d}, m = {m}"
        )));
    }
    let rows = d.checked_pow(m).filter(|&r| r <= max_rows).ok_or_else(|| {
        Error::SizeOverflow(format!("{d}^{m} rows exceeds the cap of {max_rows}"))
    })?;
    let copies = rows / d;
    let scale = 1.0 / (copies as f64).sqrt();
    DataMatrix::from_matrix(DMatrix::from_fn(rows, d, |i, j| {
        if i % d == j {
            scale
        } else {
            0.0
        }
    }))
}
