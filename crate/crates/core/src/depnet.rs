//! Dependency networks built from `d` conditional GLMs.
//!
//! Variable `i` is regressed on every other variable (plus an optional
//! intercept). The coefficient vector of variable `i` is laid out as
//! `[intercept?, x_0, .., x_{i-1}, x_{i+1}, .., x_{d-1}]`, so a self-edge
//! cannot be represented.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coreset::WeightedCoreset;
use crate::error::{Error, Result};
use crate::glm::{
    fit_gaussian, fit_poisson, poisson_nll, validate_counts, Family, IrlsOptions, ETA_CLAMP,
};
use crate::matrix::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub intercept: bool,
    pub irls: IrlsOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            irls: IrlsOptions::default(),
        }
    }
}

/// Rows to fit on, with optional per-row weights.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub data: &'a DataMatrix,
    pub weights: Option<&'a [f64]>,
}

impl<'a> From<&'a DataMatrix> for TrainingSet<'a> {
    fn from(data: &'a DataMatrix) -> Self {
        Self {
            data,
            weights: None,
        }
    }
}

impl<'a> From<&'a WeightedCoreset> for TrainingSet<'a> {
    fn from(c: &'a WeightedCoreset) -> Self {
        Self {
            data: &c.data,
            weights: Some(&c.weights),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyNetwork {
    pub family: Family,
    pub d: usize,
    #[serde(default)]
    pub variable_names: Option<Vec<String>>,
    pub intercept: bool,
    pub coefficients: Vec<Vec<f64>>,
    #[serde(default)]
    pub converged: Vec<bool>,
}

impl DependencyNetwork {
    /// A network whose conditionals ignore every other variable and have zero intercept.
    pub fn zeros(family: Family, d: usize, intercept: bool) -> Self {
        let p = d - 1 + usize::from(intercept);
        Self {
            family,
            d,
            variable_names: None,
            intercept,
            coefficients: vec![vec![0.0; p]; d],
            converged: vec![true; d],
        }
    }

    /// Coefficient of variable `from` in the model for variable `to`; `None` for `from == to`.
    pub fn edge_weight(&self, from: usize, to: usize) -> Option<f64> {
        if from == to {
            return None;
        }
        let offset = usize::from(self.intercept);
        let pos = if from < to { from } else { from - 1 };
        Some(self.coefficients[to][offset + pos])
    }

    pub fn intercept_of(&self, i: usize) -> f64 {
        if self.intercept {
            self.coefficients[i][0]
        } else {
            0.0
        }
    }

    /// Linear predictor of variable `i` given the other entries of `row`.
    pub fn linear_predictor(&self, i: usize, row: &[f64]) -> f64 {
        let coef = &self.coefficients[i];
        let offset = usize::from(self.intercept);
        let mut eta = self.intercept_of(i);
        let mut k = offset;
        for (j, &v) in row.iter().enumerate() {
            if j == i {
                continue;
            }
            eta += coef[k] * v;
            k += 1;
        }
        eta
    }

    fn validate(&self) -> Result<()> {
        let p = self.d.saturating_sub(1) + usize::from(self.intercept);
        if self.d < 2 || self.coefficients.len() != self.d {
            return Err(Error::DimensionMismatch {
                what: "network variables",
                expected: self.d,
                found: self.coefficients.len(),
            });
        }
        for c in &self.coefficients {
            if c.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "coefficient vector length",
                    expected: p,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue("network coefficient".into()));
            }
        }
        if let Some(names) = &self.variable_names {
            if names.len() != self.d {
                return Err(Error::DimensionMismatch {
                    what: "variable names",
                    expected: self.d,
                    found: names.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dn: Self = serde_json::from_str(text)?;
        dn.validate()?;
        Ok(dn)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_json()?.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

/// Design matrix for variable `i`: optional intercept column, then all other columns.
pub fn design_for(x: &DataMatrix, i: usize, intercept: bool) -> Result<DataMatrix> {
    let m = x.as_matrix();
    let offset = usize::from(intercept);
    let p = m.ncols() - 1 + offset;
    let mut a = DMatrix::zeros(m.nrows(), p);
    if intercept {
        a.column_mut(0).fill(1.0);
    }
    let mut k = offset;
    for j in 0..m.ncols() {
        if j == i {
            continue;
        }
        a.set_column(k, &m.column(j));
        k += 1;
    }
    DataMatrix::from_matrix(a)
}

fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        Some(w) if w.len() != n => Err(Error::DimensionMismatch {
            what: "weight length",
            expected: n,
            found: w.len(),
        }),
        Some(w) => Ok(w.to_vec()),
        None => Ok(vec![1.0; n]),
    }
}

fn check_family_data(x: &DataMatrix, family: Family) -> Result<()> {
    if family == Family::Poisson {
        for j in 0..x.ncols() {
            validate_counts(&x.column(j)).map_err(|e| Error::Variable {
                index: j,
                source: Box::new(e),
            })?;
        }
    }
    Ok(())
}

/// Fits one GLM per variable; the `d` fits run in parallel.
pub fn train<'a>(
    data: impl Into<TrainingSet<'a>>,
    family: Family,
    options: TrainOptions,
) -> Result<DependencyNetwork> {
    let set = data.into();
    let x = set.data;
    let d = x.ncols();
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "a dependency network needs at least two variables, got {d}"
        )));
    }
    check_family_data(x, family)?;
    let w = resolve_weights(x.nrows(), set.weights)?;

    let fits = (0..d)
        .into_par_iter()
        .map(|i| {
            let a = design_for(x, i, options.intercept)?;
            let y = x.column(i);
            match family {
                Family::Gaussian => fit_gaussian(&a, &y, &w),
                Family::Poisson => fit_poisson(&a, &y, &w, options.irls),
            }
            .map_err(|e| Error::Variable {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DependencyNetwork {
        family,
        d,
        variable_names: None,
        intercept: options.intercept,
        converged: fits.iter().map(|f| f.converged).collect(),
        coefficients: fits.into_iter().map(|f| f.coefficients).collect(),
    })
}

fn check_width(dn: &DependencyNetwork, x: &DataMatrix) -> Result<()> {
    if x.ncols() != dn.d {
        return Err(Error::DimensionMismatch {
            what: "data columns",
            expected: dn.d,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// `sum_i sum_j w_j (x_j^{\i} g_i - x_{j,i})^2`.
pub fn gdn_loss(dn: &DependencyNetwork, x: &DataMatrix, weights: Option<&[f64]>) -> Result<f64> {
    if dn.family != Family::Gaussian {
        return Err(Error::FamilyMismatch {
            expected: "gaussian",
        });
    }
    check_width(dn, x)?;
    let w = resolve_weights(x.nrows(), weights)?;
    let mut total = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        let row = x.row(j);
        for i in 0..dn.d {
            let r = dn.linear_predictor(i, &row) - row[i];
            total += wj * r * r;
        }
    }
    Ok(total)
}

/// Negative log conditional likelihood of each variable.
///
/// Gaussian conditionals use unit variance:
/// `0.5 * RSS_i + 0.5 * ln(2 pi) * sum_j w_j`.
pub fn per_variable_nll(
    dn: &DependencyNetwork,
    x: &DataMatrix,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_width(dn, x)?;
    let w = resolve_weights(x.nrows(), weights)?;
    let rows = x.to_rows();
    match dn.family {
        Family::Gaussian => {
            let total_w: f64 = w.iter().sum();
            let constant = 0.5 * (2.0 * PI).ln() * total_w;
            Ok((0..dn.d)
                .map(|i| {
                    let rss: f64 = rows
                        .iter()
                        .zip(&w)
                        .map(|(row, wj)| {
                            let r = dn.linear_predictor(i, row) - row[i];
                            wj * r * r
                        })
                        .sum();
                    0.5 * rss + constant
                })
                .collect())
        }
        Family::Poisson => (0..dn.d)
            .map(|i| {
                let a = design_for(x, i, dn.intercept)?;
                poisson_nll(&dn.coefficients[i], &a, &x.column(i), &w)
                    .map(|e| e.value)
                    .map_err(|e| Error::Variable {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect(),
    }
}

/// Negative log pseudo-likelihood: the sum of [`per_variable_nll`].
pub fn neg_log_pseudo_likelihood(
    dn: &DependencyNetwork,
    x: &DataMatrix,
    weights: Option<&[f64]>,
) -> Result<f64> {
    Ok(per_variable_nll(dn, x, weights)?.iter().sum())
}

/// Conditional means: entry `(j, i)` is `E[x_i | row j without x_i]`.
pub fn predict(dn: &DependencyNetwork, x: &DataMatrix) -> Result<DataMatrix> {
    check_width(dn, x)?;
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, dn.d);
    for j in 0..n {
        let row = x.row(j);
        for i in 0..dn.d {
            let eta = dn.linear_predictor(i, &row);
            out[(j, i)] = match dn.family {
                Family::Gaussian => eta,
                Family::Poisson => eta.min(ETA_CLAMP).exp(),
            };
        }
    }
    DataMatrix::from_matrix(out)
}

/// Per-variable residual variance `RSS_i / n` (reporting only; likelihoods
/// and sampling always use unit variance).
pub fn residual_variances(dn: &DependencyNetwork, x: &DataMatrix) -> Result<Vec<f64>> {
    let pred = predict(dn, x)?;
    let n = x.nrows() as f64;
    Ok((0..dn.d)
        .map(|i| {
            (0..x.nrows())
                .map(|j| (pred.get(j, i) - x.get(j, i)).powi(2))
                .sum::<f64>()
                / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub current: Vec<f64>,
    pub step: u64,
    pub seed: u64,
}

impl GibbsState {
    pub fn new(current: Vec<f64>, seed: u64) -> Self {
        Self {
            current,
            step: 0,
            seed,
        }
    }
}

/// One full sweep over the variables in index order, resampling each from its
/// conditional: `Normal(eta, 1)` or `Poisson(exp(eta))`.
///
/// The random stream is derived from `(seed, step)`, so the result depends on
/// the state alone.
pub fn gibbs_step(dn: &DependencyNetwork, state: &GibbsState) -> Result<GibbsState> {
    if state.current.len() != dn.d {
        return Err(Error::DimensionMismatch {
            what: "Gibbs state length",
            expected: dn.d,
            found: state.current.len(),
        });
    }
    if state.current.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("Gibbs state".into()));
    }
    if dn.family == Family::Poisson {
        validate_counts(&state.current)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
    rng.set_stream(state.step);
    let mut x = state.current.clone();
    for i in 0..dn.d {
        let eta = dn.linear_predictor(i, &x);
        x[i] = match dn.family {
            Family::Gaussian => Normal::new(eta, 1.0)
                .map_err(|e| Error::NonFiniteValue(format!("normal mean for variable {i}: {e}")))?
                .sample(&mut rng),
            Family::Poisson => {
                let rate = eta.min(ETA_CLAMP).exp();
                if rate == 0.0 {
                    0.0
                } else {
                    Poisson::new(rate)
                        .map_err(|e| {
                            Error::NonFiniteValue(format!(
                                "Poisson rate {rate} for variable {i}: {e}"
                            ))
                        })?
                        .sample(&mut rng)
                }
            }
        };
    }
    Ok(GibbsState {
        current: x,
        step: state.step + 1,
        seed: state.seed,
    })
}

/// Runs `burn_in + samples * thin` sweeps and keeps every `thin`-th state after burn-in.
pub fn run_gibbs(
    dn: &DependencyNetwork,
    init: GibbsState,
    burn_in: usize,
    samples: usize,
    thin: usize,
) -> Result<Vec<Vec<f64>>> {
    let thin = thin.max(1);
    let mut state = init;
    for _ in 0..burn_in {
        state = gibbs_step(dn, &state)?;
    }
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..thin {
            state = gibbs_step(dn, &state)?;
        }
        out.push(state.current.clone());
    }
    Ok(out)
}
