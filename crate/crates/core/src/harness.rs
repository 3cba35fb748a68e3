//! Data ingestion, transforms and the cross-validated comparison of full,
//! leverage-coreset and uniform-sample networks.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coreset::{build_leverage_coreset_of_size, build_uniform_coreset, WeightedCoreset};
use crate::depnet::{
    gdn_loss, neg_log_pseudo_likelihood, predict, train, DependencyNetwork, TrainOptions,
};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::matrix::DataMatrix;
use crate::structure::{adjacency, frobenius_difference};

const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Log1p,
    Clip01,
    Floor,
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log1p" => Ok(TransformKind::Log1p),
            "clip01" => Ok(TransformKind::Clip01),
            "floor" => Ok(TransformKind::Floor),
            other => Err(Error::InvalidParameter(format!(
                "unknown transform '{other}'"
            ))),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Log1p => "log1p",
            TransformKind::Clip01 => "clip01",
            TransformKind::Floor => "floor",
        })
    }
}

pub fn transform(x: &DataMatrix, kind: TransformKind) -> Result<DataMatrix> {
    match kind {
        TransformKind::Log1p => {
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    if x.get(i, j) <= -1.0 {
                        return Err(Error::InvalidParameter(format!(
                            "log1p undefined for {} at row {i}, column {j}",
                            x.get(i, j)
                        )));
                    }
                }
            }
            x.map(f64::ln_1p)
        }
        TransformKind::Clip01 => x.map(|v| v.clamp(0.0, 1.0)),
        TransformKind::Floor => x.map(f64::floor),
    }
}

/// Parses a rectangular numeric CSV. With `integer_columns`, every cell must be
/// a non-negative integer. Errors carry 1-based line and column numbers.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    integer_columns: bool,
) -> Result<DataMatrix> {
    load_csv_with_names(path, has_header, integer_columns).map(|(x, _)| x)
}

pub fn load_csv_with_names(
    path: impl AsRef<Path>,
    has_header: bool,
    integer_columns: bool,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    read_csv_matrix(File::open(path)?, has_header, integer_columns)
}

pub fn read_csv_matrix<R: Read>(
    reader: R,
    has_header: bool,
    integer_columns: bool,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);
    let names = if has_header {
        Some(
            rdr.headers()?
                .iter()
                .map(|h| h.trim().to_string())
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let mut width = names.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(rows + 1, |p| p.line() as usize);
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row: line,
                col: rec.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: line,
                col: c + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: c + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            if integer_columns && (v < 0.0 || v.fract() != 0.0) {
                return Err(Error::Parse {
                    row: line,
                    col: c + 1,
                    message: format!("'{cell}' is not a non-negative integer count"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok((DataMatrix::from_row_slice(rows, cols, &values)?, names))
}

pub fn write_csv_matrix<W: Write>(
    x: &DataMatrix,
    names: Option<&[String]>,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    match names {
        Some(n) if n.len() == x.ncols() => out.write_record(n)?,
        _ => out.write_record((0..x.ncols()).map(|j| format!("x{j}")))?,
    }
    for i in 0..x.nrows() {
        out.write_record(x.row(i).iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// `|f_tilde - f_star| / f_star`.
pub fn relative_error(f_tilde: f64, f_star: f64) -> Result<f64> {
    if !(f_star > 0.0) || !f_star.is_finite() || !f_tilde.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "relative error needs a positive finite reference, got f* = {f_star}, f~ = {f_tilde}"
        )));
    }
    Ok((f_tilde - f_star).abs() / f_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Full,
    Leverage,
    Uniform,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "leverage" | "coreset" => Ok(Method::Leverage),
            "uniform" => Ok(Method::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Full => "full",
            Method::Leverage => "leverage",
            Method::Uniform => "uniform",
        })
    }
}

impl Method {
    fn tag(self) -> u64 {
        match self {
            Method::Full => 0,
            Method::Leverage => 1,
            Method::Uniform => 2,
        }
    }
}

/// `ceil(fraction * n)`, clamped to `[1, n]`.
pub fn sample_size(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok(((fraction * n as f64).ceil() as usize).clamp(1, n))
}

/// Draws a coreset of expected (leverage) or exact (uniform) size
/// `ceil(fraction * n)`. Empty leverage draws are retried with derived seeds.
pub fn compress(
    x: &DataMatrix,
    method: Method,
    fraction: f64,
    seed: u64,
) -> Result<Option<WeightedCoreset>> {
    let m = sample_size(fraction, x.nrows())?;
    match method {
        Method::Full => Ok(None),
        Method::Uniform => build_uniform_coreset(x, m, seed).map(Some),
        Method::Leverage => {
            let mut attempt = 0;
            loop {
                match build_leverage_coreset_of_size(x, m, mix_seed(seed, &[attempt])) {
                    Ok((c, _)) => return Ok(Some(c)),
                    Err(Error::EmptyDraw) if attempt + 1 < MAX_REDRAWS => attempt += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
}

/// splitmix64-style mixing of a base seed with job coordinates.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub family: Family,
    pub fraction: f64,
    pub fold: usize,
    pub nlpl: f64,
    pub rmse: f64,
    pub relative_error: f64,
    pub frobenius_to_full: f64,
    pub train_seconds: f64,
    pub seed: u64,
    pub train_rows: usize,
    pub coreset_size: usize,
    pub intercept: bool,
}

impl EvalReport {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.train_seconds = other.train_seconds;
        a == *other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub family: Family,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub intercept: bool,
    pub predict_transform: Option<TransformKind>,
}

impl CvConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            methods: vec![Method::Full, Method::Leverage, Method::Uniform],
            fractions: vec![0.1, 0.2, 0.3, 0.4],
            folds: 10,
            seed: 0,
            intercept: true,
            predict_transform: match family {
                Family::Gaussian => None,
                Family::Poisson => Some(TransformKind::Floor),
            },
        }
    }

    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            intercept: self.intercept,
            ..TrainOptions::default()
        }
    }
}

/// Family objective used for relative errors: the GDN loss for Gaussian
/// networks, the negative log pseudo-likelihood for Poisson networks.
pub fn objective(dn: &DependencyNetwork, x: &DataMatrix) -> Result<f64> {
    match dn.family {
        Family::Gaussian => gdn_loss(dn, x, None),
        Family::Poisson => neg_log_pseudo_likelihood(dn, x, None),
    }
}

/// Root mean squared error of (optionally post-transformed) conditional-mean
/// predictions over every entry of `x`.
pub fn prediction_rmse(
    dn: &DependencyNetwork,
    x: &DataMatrix,
    post: Option<TransformKind>,
) -> Result<f64> {
    let mut pred = predict(dn, x)?;
    if let Some(kind) = post {
        pred = transform(&pred, kind)?;
    }
    let sq = (pred.as_matrix() - x.as_matrix()).norm_squared();
    Ok((sq / (x.nrows() * x.ncols()) as f64).sqrt())
}

/// Negative log pseudo-likelihood and prediction RMSE of `dn` on `x`.
pub fn evaluate_model(
    dn: &DependencyNetwork,
    x: &DataMatrix,
    post: Option<TransformKind>,
) -> Result<(f64, f64)> {
    Ok((
        neg_log_pseudo_likelihood(dn, x, None)?,
        prediction_rmse(dn, x, post)?,
    ))
}

struct Reference {
    dn: DependencyNetwork,
    objective: f64,
    seconds: f64,
}

fn fit_reference(train_x: &DataMatrix, family: Family, options: TrainOptions) -> Result<Reference> {
    let start = Instant::now();
    let dn = train(train_x, family, options)?;
    let seconds = start.elapsed().as_secs_f64();
    let objective = objective(&dn, train_x)?;
    Ok(Reference {
        dn,
        objective,
        seconds,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    train_x: &DataMatrix,
    test_x: &DataMatrix,
    reference: &Reference,
    config: &CvConfig,
    method: Method,
    fraction: f64,
    fold: usize,
    seed: u64,
) -> Result<EvalReport> {
    let options = config.train_options();
    let (dn, seconds, size) = if method == Method::Full {
        (reference.dn.clone(), reference.seconds, train_x.nrows())
    } else {
        let start = Instant::now();
        let coreset = compress(train_x, method, fraction, seed)?
            .expect("non-full methods always produce a coreset");
        let dn = train(&coreset, config.family, options)?;
        (dn, start.elapsed().as_secs_f64(), coreset.len())
    };
    let (nlpl, rmse) = evaluate_model(&dn, test_x, config.predict_transform)?;
    let relative = if method == Method::Full {
        0.0
    } else {
        relative_error(objective(&dn, train_x)?, reference.objective)?
    };
    let frob = frobenius_difference(&adjacency(&dn), &adjacency(&reference.dn))?;
    Ok(EvalReport {
        method,
        family: config.family,
        fraction: if method == Method::Full {
            1.0
        } else {
            fraction
        },
        fold,
        nlpl,
        rmse,
        relative_error: relative,
        frobenius_to_full: frob,
        train_seconds: seconds,
        seed,
        train_rows: train_x.nrows(),
        coreset_size: size,
        intercept: config.intercept,
    })
}

/// Every method x fraction cell trained on `train_x` and evaluated on `test_x`.
pub fn evaluate_split(
    train_x: &DataMatrix,
    test_x: &DataMatrix,
    config: &CvConfig,
    fold: usize,
) -> Result<Vec<EvalReport>> {
    let reference = fit_reference(train_x, config.family, config.train_options()).map_err(|e| {
        Error::Experiment {
            fold,
            method: Method::Full.to_string(),
            fraction: 1.0,
            source: Box::new(e),
        }
    })?;
    let mut reports = Vec::new();
    for &method in &config.methods {
        let fractions: Vec<(usize, f64)> = if method == Method::Full {
            vec![(0, 1.0)]
        } else {
            config.fractions.iter().copied().enumerate().collect()
        };
        for (fi, fraction) in fractions {
            let seed = mix_seed(config.seed, &[fold as u64, method.tag(), fi as u64]);
            let report = run_cell(
                train_x, test_x, &reference, config, method, fraction, fold, seed,
            )
            .map_err(|e| Error::Experiment {
                fold,
                method: method.to_string(),
                fraction,
                source: Box::new(e),
            })?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Fold index of every row: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }
    assignment
}

/// K-fold cross-validation of every configured method and fraction.
/// Folds run in parallel; the result is ordered by fold, then method, then fraction.
pub fn cross_validate(x: &DataMatrix, config: &CvConfig) -> Result<Vec<EvalReport>> {
    if config.folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "cross-validation needs at least two folds, got {}",
            config.folds
        )));
    }
    if x.nrows() < config.folds {
        return Err(Error::InvalidParameter(format!(
            "{} rows cannot be split into {} folds",
            x.nrows(),
            config.folds
        )));
    }
    for &f in &config.fractions {
        sample_size(f, x.nrows())?;
    }
    let assignment = fold_assignment(x.nrows(), config.folds, config.seed);
    let per_fold = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let test: Vec<usize> = (0..x.nrows()).filter(|&i| assignment[i] == fold).collect();
            let train_rows: Vec<usize> =
                (0..x.nrows()).filter(|&i| assignment[i] != fold).collect();
            let train_x = x.select_rows(&train_rows)?;
            let test_x = x.select_rows(&test)?;
            evaluate_split(&train_x, &test_x, config, fold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_fold.into_iter().flatten().collect())
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "method",
    "family",
    "fraction",
    "fold",
    "nlpl",
    "rmse",
    "relative_error",
    "frobenius_to_full",
    "train_seconds",
    "seed",
];

pub fn write_reports_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(REPORT_COLUMNS)?;
    for r in reports {
        out.write_record([
            r.method.to_string(),
            r.family.to_string(),
            r.fraction.to_string(),
            r.fold.to_string(),
            r.nlpl.to_string(),
            r.rmse.to_string(),
            r.relative_error.to_string(),
            r.frobenius_to_full.to_string(),
            r.train_seconds.to_string(),
            r.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub fraction: f64,
    pub runs: usize,
    pub nlpl: f64,
    pub rmse: f64,
    pub relative_error: f64,
    pub frobenius_to_full: f64,
    pub train_seconds: f64,
}

/// Means over folds (or seeds) for each method and fraction, in first-seen order.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in reports {
        if !keys.iter().any(|&(m, f)| m == r.method && f == r.fraction) {
            keys.push((r.method, r.fraction));
        }
    }
    keys.into_iter()
        .map(|(method, fraction)| {
            let group: Vec<&EvalReport> = reports
                .iter()
                .filter(|r| r.method == method && r.fraction == fraction)
                .collect();
            let k = group.len() as f64;
            let mean = |f: fn(&EvalReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / k;
            SummaryRow {
                method,
                fraction,
                runs: group.len(),
                nlpl: mean(|r| r.nlpl),
                rmse: mean(|r| r.rmse),
                relative_error: mean(|r| r.relative_error),
                frobenius_to_full: mean(|r| r.frobenius_to_full),
                train_seconds: mean(|r| r.train_seconds),
            }
        })
        .collect()
}
