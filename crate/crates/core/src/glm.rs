//! Weighted maximum-likelihood fits for the Gaussian and Poisson conditionals.
//!
//! The Poisson family uses the canonical log link. Its negative log-likelihood is
//! `sum_i w_i [exp(a_i g) - y_i a_i g + ln(y_i!)]`, with the linear predictor
//! clamped at [`ETA_CLAMP`] before exponentiation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix::{weighted_least_squares, DataMatrix};

/// Upper clamp applied to Poisson linear predictors before `exp`.
pub const ETA_CLAMP: f64 = 50.0;

/// Offset added to the mean count when initialising the intercept.
const INIT_OFFSET: f64 = 1e-8;

const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub converged: bool,
    pub iterations: usize,
    pub final_nll: f64,
    /// Some linear predictor hit [`ETA_CLAMP`] at the returned coefficients.
    pub clamped: bool,
    /// Objective after each accepted iteration, starting with the initial value.
    pub nll_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// A Poisson negative log-likelihood value and whether clamping occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllEval {
    pub value: f64,
    pub clamped: bool,
}

pub fn validate_counts(y: &[f64]) -> Result<()> {
    match y
        .iter()
        .position(|&v| !(v >= 0.0) || v.fract() != 0.0 || !v.is_finite())
    {
        Some(index) => Err(Error::InvalidCount {
            index,
            value: y[index],
        }),
        None => Ok(()),
    }
}

fn check_shapes(gamma_len: usize, a: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if gamma_len != a.ncols() {
        return Err(Error::DimensionMismatch {
            what: "coefficient length",
            expected: a.ncols(),
            found: gamma_len,
        });
    }
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if w.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what: "weight length",
            expected: a.nrows(),
            found: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "weight {i} must be finite and non-negative, got {}",
            w[i]
        )));
    }
    Ok(())
}

fn linear_predictor(a: &DMatrix<f64>, gamma: &[f64]) -> DVector<f64> {
    a * DVector::from_column_slice(gamma)
}

fn nll_from_eta(eta: &DVector<f64>, y: &[f64], w: &[f64]) -> NllEval {
    let mut clamped = false;
    let mut value = 0.0;
    for ((&e, &yi), &wi) in eta.iter().zip(y).zip(w) {
        if wi == 0.0 {
            continue;
        }
        let ec = if e > ETA_CLAMP {
            clamped = true;
            ETA_CLAMP
        } else {
            e
        };
        value += wi * (ec.exp() - yi * ec + ln_gamma(yi + 1.0));
    }
    NllEval { value, clamped }
}

pub fn poisson_nll(gamma: &[f64], a: &DataMatrix, y: &[f64], w: &[f64]) -> Result<NllEval> {
    check_shapes(gamma.len(), a.as_matrix(), y, w)?;
    validate_counts(y)?;
    Ok(nll_from_eta(&linear_predictor(a.as_matrix(), gamma), y, w))
}

/// `sum_i w_i (exp(a_i g) - y_i) a_i`.
pub fn poisson_nll_gradient(
    gamma: &[f64],
    a: &DataMatrix,
    y: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(gamma.len(), a.as_matrix(), y, w)?;
    validate_counts(y)?;
    Ok(gradient_unchecked(a.as_matrix(), gamma, y, w))
}

fn gradient_unchecked(a: &DMatrix<f64>, gamma: &[f64], y: &[f64], w: &[f64]) -> Vec<f64> {
    let eta = linear_predictor(a, gamma);
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter()
            .zip(y)
            .zip(w)
            .map(|((&e, &yi), &wi)| wi * (e.min(ETA_CLAMP).exp() - yi)),
    );
    (a.transpose() * resid).iter().copied().collect()
}

/// Natural log of the unclamped Poisson NLL, computed without overflowing for
/// linear predictors far beyond `exp`'s range.
pub fn poisson_nll_log_domain(gamma: &[f64], a: &DataMatrix, y: &[f64], w: &[f64]) -> Result<f64> {
    check_shapes(gamma.len(), a.as_matrix(), y, w)?;
    validate_counts(y)?;
    let eta = linear_predictor(a.as_matrix(), gamma);
    let mut log_terms = Vec::with_capacity(y.len());
    let mut linear = 0.0;
    for ((&e, &yi), &wi) in eta.iter().zip(y).zip(w) {
        if wi == 0.0 {
            continue;
        }
        log_terms.push(e + wi.ln());
        linear += wi * (ln_gamma(yi + 1.0) - yi * e);
    }
    if log_terms.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log_terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    // total = exp(lse) + linear, which is non-negative for valid counts
    let log_total = if lse < 700.0 {
        (lse.exp() + linear).ln()
    } else {
        lse + (linear * (-lse).exp()).ln_1p()
    };
    Ok(log_total)
}

fn positive_weight_check(w: &[f64]) -> Result<()> {
    if w.iter().any(|&v| v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(
            "at least one weight must be positive".into(),
        ))
    }
}

/// Column index of an all-ones column, used as the intercept.
fn intercept_column(a: &DMatrix<f64>) -> Option<usize> {
    (0..a.ncols()).find(|&j| a.column(j).iter().all(|&v| v == 1.0))
}

/// Poisson regression by IRLS with step-halving.
///
/// Starts from zero coefficients, except that an all-ones column (the
/// intercept) starts at `ln(mean(y) + 1e-8)`. Iteration stops when the relative
/// decrease of the NLL falls below `tol` or the gradient's max-norm falls below
/// `tol * (1 + sum_i w_i y_i)`. The last accepted iterate is always returned;
/// `converged` is false when the iteration cap was hit or the returned
/// coefficients push a linear predictor into the clamp.
pub fn fit_poisson(a: &DataMatrix, y: &[f64], w: &[f64], options: IrlsOptions) -> Result<GlmFit> {
    let am = a.as_matrix();
    let p = am.ncols();
    check_shapes(p, am, y, w)?;
    validate_counts(y)?;
    positive_weight_check(w)?;

    let total_w: f64 = w.iter().sum();
    let weighted_y: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let scale = 1.0 + weighted_y;

    let mut gamma = vec![0.0; p];
    if let Some(j) = intercept_column(am) {
        gamma[j] = (weighted_y / total_w + INIT_OFFSET).ln();
    }

    let mut current = nll_from_eta(&linear_predictor(am, &gamma), y, w);
    let mut trace = vec![current.value];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=options.max_iter {
        iterations = it;
        let eta = linear_predictor(am, &gamma);
        let mut working_w = Vec::with_capacity(y.len());
        let mut working_z = Vec::with_capacity(y.len());
        for ((&e, &yi), &wi) in eta.iter().zip(y).zip(w) {
            let ec = e.min(ETA_CLAMP);
            let mu = ec.exp().max(1e-300);
            working_w.push(wi * mu);
            working_z.push(ec + (yi - mu) / mu);
        }
        let target = weighted_least_squares(am, &working_z, &working_w)?;
        let direction: Vec<f64> = target.iter().zip(&gamma).map(|(t, g)| t - g).collect();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = gamma
                .iter()
                .zip(&direction)
                .map(|(g, d)| g + step * d)
                .collect();
            let eval = nll_from_eta(&linear_predictor(am, &candidate), y, w);
            if eval.value.is_finite() && eval.value <= current.value {
                accepted = Some((candidate, eval));
                break;
            }
            step *= 0.5;
        }

        let Some((next, eval)) = accepted else {
            // No step along the Newton direction decreases the objective.
            converged = !current.clamped;
            break;
        };
        let decrease = current.value - eval.value;
        gamma = next;
        current = eval;
        trace.push(current.value);

        let grad_inf = gradient_unchecked(am, &gamma, y, w)
            .iter()
            .fold(0.0_f64, |m, g| m.max(g.abs()));
        if decrease <= options.tol * current.value.abs().max(f64::MIN_POSITIVE)
            || grad_inf < options.tol * scale
        {
            converged = !current.clamped;
            break;
        }
    }

    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteValue("Poisson coefficients".into()));
    }
    Ok(GlmFit {
        coefficients: gamma,
        family: Family::Poisson,
        converged,
        iterations,
        final_nll: current.value,
        clamped: current.clamped,
        nll_trace: trace,
    })
}

/// Weighted least squares; `final_nll` is the weighted residual sum of squares.
pub fn fit_gaussian(a: &DataMatrix, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    let am = a.as_matrix();
    check_shapes(am.ncols(), am, y, w)?;
    positive_weight_check(w)?;
    let gamma = weighted_least_squares(am, y, w)?;
    let rss = weighted_rss(am, &gamma, y, w);
    Ok(GlmFit {
        coefficients: gamma,
        family: Family::Gaussian,
        converged: true,
        iterations: 1,
        final_nll: rss,
        clamped: false,
        nll_trace: vec![rss],
    })
}

pub(crate) fn weighted_rss(a: &DMatrix<f64>, gamma: &[f64], y: &[f64], w: &[f64]) -> f64 {
    linear_predictor(a, gamma)
        .iter()
        .zip(y)
        .zip(w)
        .map(|((p, yi), wi)| wi * (p - yi) * (p - yi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> DataMatrix {
        DataMatrix::from_row_slice(n, 1, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn nll_identity_cases() {
        let a = ones(5);
        let v = poisson_nll(&[0.0], &a, &[1.0; 5], &[1.0; 5]).unwrap();
        assert!((v.value - 5.0).abs() < 1e-12);
        assert!(!v.clamped);
        let single = ones(1);
        let v = poisson_nll(&[0.0], &single, &[0.0], &[1.0]).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_bad_counts() {
        let a = ones(2);
        assert!(matches!(
            poisson_nll(&[0.0], &a, &[1.0, -1.0], &[1.0, 1.0]),
            Err(Error::InvalidCount { index: 1, .. })
        ));
        assert!(poisson_nll(&[0.0], &a, &[1.5, 1.0], &[1.0, 1.0]).is_err());
        assert!(poisson_nll_gradient(&[0.0], &a, &[0.5, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn clamp_is_flagged() {
        let a = DataMatrix::from_row_slice(1, 1, &[100.0]).unwrap();
        let v = poisson_nll(&[1.0], &a, &[0.0], &[1.0]).unwrap();
        assert!(v.clamped);
        assert!((v.value - ETA_CLAMP.exp()).abs() <= 1e-6 * ETA_CLAMP.exp());
    }

    #[test]
    fn gradient_zero_at_exact_means() {
        let a = DataMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 2.0_f64.ln()]).unwrap();
        let y = [1.0, 1.0, 2.0];
        let g = poisson_nll_gradient(&[0.0, 1.0], &a, &y, &[1.0; 3]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn intercept_only_mle_is_log_mean() {
        let a = ones(3);
        let fit = fit_poisson(&a, &[1.0, 2.0, 3.0], &[1.0; 3], IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2.0_f64.ln()).abs() < 1e-10);
        let g = poisson_nll_gradient(&fit.coefficients, &a, &[1.0, 2.0, 3.0], &[1.0; 3]).unwrap();
        assert!(g[0].abs() < 1e-6);
    }

    #[test]
    fn intercept_only_mean_of_goal_counts() {
        // 100 games with a mean of 1.59 goals
        let mut y = vec![1.0; 41];
        y.extend(vec![2.0; 59]);
        y[0] = 0.0;
        y[1] = 0.0;
        y[2] = 3.0;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.59).abs() < 1e-12);
        let a = ones(y.len());
        let fit = fit_poisson(&a, &y, &vec![1.0; y.len()], IrlsOptions::default()).unwrap();
        assert!((fit.coefficients[0].exp() - 1.59).abs() < 1e-8);
    }

    #[test]
    fn irls_trace_is_monotone() {
        let a = DataMatrix::from_row_slice(
            6,
            2,
            &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0, 1.0, 5.0],
        )
        .unwrap();
        let y = [0.0, 1.0, 1.0, 4.0, 6.0, 13.0];
        let fit = fit_poisson(&a, &y, &[1.0; 6], IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        for pair in fit.nll_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn fit_beyond_clamp_is_flagged() {
        // the MLE needs exp(eta) = 1e30, i.e. eta ~ 69 > ETA_CLAMP
        let a = DataMatrix::from_row_slice(1, 1, &[100.0]).unwrap();
        let fit = fit_poisson(&a, &[1e30], &[1.0], IrlsOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.clamped);
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn gaussian_examples() {
        let a = DataMatrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let fit = fit_gaussian(&a, &[2.0, 4.0], &[3.0, 1.0]).unwrap();
        assert!((fit.coefficients[0] - 2.5).abs() < 1e-12);
        assert!((fit.final_nll - (3.0 * 0.25 + 2.25)).abs() < 1e-12);

        let a = DataMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        let y = [1.0, 3.0, 5.0];
        let fit = fit_gaussian(&a, &y, &[1.0; 3]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.final_nll < 1e-20);
    }

    #[test]
    fn log_domain_matches_direct_when_representable() {
        let a = DataMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]).unwrap();
        let y = [1.0, 0.0, 3.0];
        let g = [0.3, 0.7];
        let direct = poisson_nll(&g, &a, &y, &[1.0; 3]).unwrap().value;
        let logd = poisson_nll_log_domain(&g, &a, &y, &[1.0; 3]).unwrap();
        assert!((logd - direct.ln()).abs() < 1e-12);
        let big = DataMatrix::from_row_slice(1, 1, &[1000.0]).unwrap();
        let l = poisson_nll_log_domain(&[1.0], &big, &[1.0], &[1.0]).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("poisson".parse::<Family>().unwrap(), Family::Poisson);
        assert!("binomial".parse::<Family>().is_err());
        assert_eq!(Family::Gaussian.to_string(), "gaussian");
    }
}
