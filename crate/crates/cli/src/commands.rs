use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coredn::coreset::{
    build_leverage_coreset_of_size, build_leverage_coreset_with_stats, build_uniform_coreset,
    CoresetStats, LeverageOptions, SamplingMethod, WeightedCoreset,
};
use coredn::datagen::generate_hard_instance;
use coredn::depnet::{run_gibbs, train, DependencyNetwork, GibbsState, TrainOptions};
use coredn::glm::Family;
use coredn::harness::{
    cross_validate, evaluate_model, load_csv_with_names, objective, relative_error, sample_size,
    summarize, transform, write_reports_csv, CvConfig, EvalReport, Method, TransformKind,
};
use coredn::matrix::DataMatrix;
use coredn::structure::{
    adjacency, frobenius_difference, top_positive_edges, write_edges_csv, write_edges_dot,
};
use serde::Serialize;

use crate::staging::Staged;
use crate::{
    Cli, Command, CoresetArgs, EvalArgs, GibbsArgs, HardArgs, InputArgs, StructureArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let mut staged = Staged::default();
    match &cli.command {
        Command::Coreset(a) => coreset(a, &mut staged)?,
        Command::Train(a) => train_cmd(a, &mut staged)?,
        Command::Eval(a) => eval(cli, a, &mut staged)?,
        Command::Gibbs(a) => gibbs(a, &mut staged)?,
        Command::Structure(a) => structure(a, &mut staged)?,
        Command::Hard(a) => hard(a, &mut staged)?,
    }
    staged.commit()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load(
    path: &Path,
    header: bool,
    transforms: &[TransformKind],
    family: Option<Family>,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    let counts = family == Some(Family::Poisson) && transforms.is_empty();
    let (mut x, names) = load_csv_with_names(path, header, counts)
        .with_context(|| format!("reading {}", path.display()))?;
    for &kind in transforms {
        x = transform(&x, kind)?;
    }
    Ok((x, names))
}

fn load_input(
    input: &InputArgs,
    family: Option<Family>,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    load(&input.input, input.header, &input.transforms, family)
}

fn read_model(path: &Path) -> Result<DependencyNetwork> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    DependencyNetwork::read_json(BufReader::new(file))
        .with_context(|| format!("reading model {}", path.display()))
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    method: Method,
    rows: usize,
    size: usize,
    expected_size: f64,
    size_std: f64,
    size_param: Option<f64>,
    rank: Option<usize>,
    distortion: Option<f64>,
    seed: u64,
}

struct SampleSpec {
    method: Method,
    eps: Option<f64>,
    fraction: Option<f64>,
    options: LeverageOptions,
    seed: u64,
}

fn draw(x: &DataMatrix, spec: &SampleSpec) -> Result<(WeightedCoreset, SampleSummary)> {
    let (coreset, stats): (WeightedCoreset, Option<CoresetStats>) =
        match (spec.method, spec.eps, spec.fraction) {
            (Method::Full, _, _) => bail!(coredn::Error::InvalidParameter(
                "method 'full' does not sample; choose leverage or uniform".into()
            )),
            (Method::Leverage, Some(eps), _) => {
                let (c, s) = build_leverage_coreset_with_stats(x, eps, spec.seed, spec.options)?;
                (c, Some(s))
            }
            (Method::Leverage, None, Some(f)) => {
                let (c, s) =
                    build_leverage_coreset_of_size(x, sample_size(f, x.nrows())?, spec.seed)?;
                (c, Some(s))
            }
            (Method::Uniform, Some(_), _) => bail!(coredn::Error::InvalidParameter(
                "--eps sizes the leverage construction; use --fraction with uniform sampling"
                    .into()
            )),
            (Method::Uniform, None, Some(f)) => (
                build_uniform_coreset(x, sample_size(f, x.nrows())?, spec.seed)?,
                None,
            ),
            (_, None, None) => bail!(coredn::Error::InvalidParameter(
                "one of --eps or --fraction is required".into()
            )),
        };
    let summary = SampleSummary {
        method: spec.method,
        rows: x.nrows(),
        size: coreset.len(),
        expected_size: stats
            .as_ref()
            .map_or(coreset.len() as f64, |s| s.expected_size),
        size_std: stats.as_ref().map_or(0.0, |s| s.size_std),
        size_param: stats.as_ref().map(|s| s.size_param),
        rank: stats.as_ref().map(|s| s.rank),
        distortion: stats.as_ref().and_then(|s| s.distortion),
        seed: spec.seed,
    };
    Ok((coreset, summary))
}

fn coreset(a: &CoresetArgs, staged: &mut Staged) -> Result<()> {
    let (x, names) = load_input(&a.input, None)?;
    let s = &a.sampling;
    let spec = SampleSpec {
        method: s.method,
        eps: s.eps,
        fraction: s.fraction,
        options: LeverageOptions {
            const_d: s.const_d,
            boost_log_d: s.boost_logd,
        },
        seed: s.seed,
    };
    let (c, summary) = draw(&x, &spec)?;
    staged.add_with(&a.out, |buf| c.write_csv(buf, names.as_deref()))?;
    if let Some(path) = &a.stats {
        staged.add(path, serde_json::to_vec_pretty(&summary)?);
    }
    print_json(&summary)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    family: Family,
    variables: usize,
    rows: usize,
    intercept: bool,
    converged: usize,
    sample: Option<SampleSummary>,
}

fn train_cmd(a: &TrainArgs, staged: &mut Staged) -> Result<()> {
    let options = TrainOptions {
        intercept: a.intercept.enabled(),
        ..TrainOptions::default()
    };
    let (dn, rows, sample) = match (&a.input, &a.coreset) {
        (Some(path), _) => {
            let (x, names) = load(path, a.header, &a.transforms, Some(a.family))?;
            let (mut dn, sample) = if a.method == Method::Full {
                (train(&x, a.family, options)?, None)
            } else {
                let spec = SampleSpec {
                    method: a.method,
                    eps: a.eps,
                    fraction: a.fraction,
                    options: LeverageOptions {
                        const_d: a.const_d,
                        boost_log_d: a.boost_logd,
                    },
                    seed: a.seed,
                };
                let (c, summary) = draw(&x, &spec)?;
                (train(&c, a.family, options)?, Some(summary))
            };
            dn.variable_names = names;
            (dn, x.nrows(), sample)
        }
        (None, Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let c =
                WeightedCoreset::read_csv(BufReader::new(file), SamplingMethod::Leverage, a.seed)
                    .with_context(|| format!("reading coreset {}", path.display()))?;
            (train(&c, a.family, options)?, c.len(), None)
        }
        (None, None) => unreachable!("clap requires --input or --coreset"),
    };
    let summary = TrainSummary {
        family: dn.family,
        variables: dn.d,
        rows,
        intercept: dn.intercept,
        converged: dn.converged.iter().filter(|&&c| c).count(),
        sample,
    };
    staged.add(&a.out, dn.to_json()?.into_bytes());
    print_json(&summary)
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a, S: Serialize> {
    config: &'a Cli,
    reports: &'a [EvalReport],
    summary: S,
}

fn json_path(a: &EvalArgs) -> PathBuf {
    a.json
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"))
}

fn prediction_transform(a: &EvalArgs, family: Family) -> Option<TransformKind> {
    if a.raw_predictions {
        None
    } else {
        a.predict_transform.or(match family {
            Family::Gaussian => None,
            Family::Poisson => Some(TransformKind::Floor),
        })
    }
}

fn eval(cli: &Cli, a: &EvalArgs, staged: &mut Staged) -> Result<()> {
    let reports = match &a.model {
        Some(model) => {
            let dn = read_model(model)?;
            let (x, _) = load_input(&a.input, Some(dn.family))?;
            let (nlpl, rmse) = evaluate_model(&dn, &x, prediction_transform(a, dn.family))?;
            let (relative, frob) = match &a.reference {
                Some(r) => {
                    let reference = read_model(r)?;
                    (
                        relative_error(objective(&dn, &x)?, objective(&reference, &x)?)?,
                        frobenius_difference(&adjacency(&dn), &adjacency(&reference))?,
                    )
                }
                None => (0.0, 0.0),
            };
            vec![EvalReport {
                method: Method::Full,
                family: dn.family,
                fraction: 1.0,
                fold: 0,
                nlpl,
                rmse,
                relative_error: relative,
                frobenius_to_full: frob,
                train_seconds: 0.0,
                seed: a.seed,
                train_rows: x.nrows(),
                coreset_size: x.nrows(),
                intercept: dn.intercept,
            }]
        }
        None => {
            let (x, _) = load_input(&a.input, Some(a.family))?;
            let mut config = CvConfig::new(a.family);
            if !a.methods.is_empty() {
                config.methods = a.methods.clone();
            }
            if !a.fractions.is_empty() {
                config.fractions = a.fractions.clone();
            }
            config.folds = a.folds;
            config.seed = a.seed;
            config.intercept = a.intercept.enabled();
            config.predict_transform = prediction_transform(a, a.family);
            cross_validate(&x, &config)?
        }
    };
    let summary = summarize(&reports);
    staged.add_with(&a.out, |buf| write_reports_csv(&reports, buf))?;
    staged.add(
        &json_path(a),
        serde_json::to_vec_pretty(&EvalOutput {
            config: cli,
            reports: &reports,
            summary: &summary,
        })?,
    );
    print_json(&summary)
}

fn gibbs(a: &GibbsArgs, staged: &mut Staged) -> Result<()> {
    let dn = read_model(&a.model)?;
    let init = if a.init.is_empty() {
        vec![0.0; dn.d]
    } else {
        a.init.clone()
    };
    let samples = run_gibbs(
        &dn,
        GibbsState::new(init, a.seed),
        a.burn_in,
        a.samples,
        a.thin,
    )?;
    staged.add_with(&a.out, |buf| {
        let mut out = csv::Writer::from_writer(buf);
        let mut header = vec!["sample".to_string()];
        match &dn.variable_names {
            Some(n) if n.len() == dn.d => header.extend(n.iter().cloned()),
            _ => header.extend((0..dn.d).map(|j| format!("x{j}"))),
        }
        out.write_record(&header)?;
        for (t, s) in samples.iter().enumerate() {
            out.write_record(std::iter::once(t.to_string()).chain(s.iter().map(f64::to_string)))?;
        }
        out.flush()?;
        Ok(())
    })?;
    print_json(&serde_json::json!({
        "samples": samples.len(),
        "burn_in": a.burn_in,
        "thin": a.thin,
        "seed": a.seed,
    }))
}

fn structure(a: &StructureArgs, staged: &mut Staged) -> Result<()> {
    let dn = read_model(&a.model)?;
    let edges = top_positive_edges(&adjacency(&dn), a.edges);
    let names = dn.variable_names.as_deref();
    staged.add_with(&a.out, |buf| write_edges_csv(&edges, names, buf))?;
    if let Some(dot) = &a.dot {
        staged.add_with(dot, |buf| write_edges_dot(&edges, names, buf))?;
    }
    print_json(&serde_json::json!({ "edges": edges.len(), "requested": a.edges }))
}

fn parse_bits(text: &str) -> Result<Vec<bool>> {
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(coredn::Error::InvalidParameter(format!(
                "bit strings may only contain 0 and 1, found '{other}'"
            ))
            .into()),
        })
        .collect()
}

fn hard(a: &HardArgs, staged: &mut Staged) -> Result<()> {
    let bits = a.bits.as_deref().map(parse_bits).transpose()?;
    let instance = generate_hard_instance(a.n, bits, a.seed)?;
    let report = instance.separation_report()?;
    let separated = report.separated();
    staged.add_with(&a.out, |buf| instance.write_csv(buf))?;
    staged.add(
        &a.report,
        serde_json::to_vec_pretty(&serde_json::json!({
            "separated": separated,
            "seed": a.seed,
            "report": report,
        }))?,
    );
    print_json(&serde_json::json!({
        "n": report.n,
        "present": instance.present_indices().len(),
        "min_present_log_nll": report.min_present_log_nll,
        "present_lower_bound": report.present_lower_bound,
        "max_absent_log_nll": report.max_absent_log_nll,
        "absent_upper_bound": report.absent_upper_bound,
        "separated": separated,
    }))
}
