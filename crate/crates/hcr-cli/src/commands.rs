//! Subcommand surface: fit, eval, matrix, grid, topk, normalize, region.
//!
//! Every command is deterministic given its flags; commands that draw random
//! numbers take an explicit `--seed` (default 0) and echo it in their output
//! headers.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use hcr::report::{
    write_coefficient_table, write_eval_report, write_grid,
};
use hcr::{
    build_vectors, difference_series, empirical_cdf, evaluate, evaluate_matrix, fit,
    fit_gaussian, fit_laplace, holdout_evaluate, model::fmt_f64, normalize_series, Model,
    ModelConfig, NormalizerKind, NormalizerParams, RawSeries, RegionMethod,
};
use ndarray::Array2;

use crate::dieboldli;
use crate::errors::{CliError, Result};
use crate::ingest;

#[derive(Subcommand)]
pub enum Command {
    /// Fit a density model and write it to a model file
    Fit(FitArgs),
    /// Evaluate predicted densities, either via a train/test split of fit
    /// flags or for an existing model file
    Eval(EvalArgs),
    /// Fit and evaluate orders × degrees under one shared split
    Matrix(MatrixArgs),
    /// Evaluate a model's 2D marginal density on a regular grid
    Grid(GridArgs),
    /// Rank model coefficients by absolute value with noise estimates
    Topk(TopkArgs),
    /// Emit residuals, fitted normalizers, uniform series and CDF tables
    Normalize(NormalizeArgs),
    /// Volume and mass fractions of the region where density exceeds a
    /// threshold
    Region(RegionArgs),
}

#[derive(Args)]
pub struct InputArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub input: PathBuf,
    /// Header name of the date/label column, if present
    #[arg(long)]
    pub date_column: Option<String>,
    /// Interpret numeric-named columns as maturities in months and extract
    /// the three factor series b1, b2, b3 before modeling
    #[arg(long)]
    pub from_yields: bool,
    /// Per-month loading decay for --from-yields (default 0.0609)
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated variable columns to model
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Maximum per-coordinate polynomial degree
    #[arg(long)]
    pub degree: usize,
    /// Number of previous time steps used as context
    #[arg(long, default_value_t = 0)]
    pub order: usize,
    /// Residual distribution: laplace or gaussian
    #[arg(long, default_value = "laplace")]
    pub normalizer: String,
    /// Drop coefficients below this many sigmas of estimation noise
    #[arg(long)]
    pub prune_sigmas: Option<f64>,
    /// Model file to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Existing model file (conflicts with the fit flags)
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub normalizer: Option<String>,
    #[arg(long)]
    pub prune_sigmas: Option<f64>,
    /// Held-out fraction for split evaluation (default 0.25)
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Density thresholds: a..b inclusive integer range or a comma list
    #[arg(long, default_value = "0..10")]
    pub thresholds: String,
    /// Report file to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Context orders to sweep
    #[arg(long, default_value = "0,1,2")]
    pub orders: String,
    /// Degrees to sweep
    #[arg(long, default_value = "1..9")]
    pub degrees: String,
    #[arg(long, default_value = "laplace")]
    pub normalizer: String,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "0..10")]
    pub thresholds: String,
    /// Directory for the report files
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct GridArgs {
    /// Model file to read
    #[arg(long)]
    pub model: PathBuf,
    /// Two coordinate indices, e.g. 0,1
    #[arg(long)]
    pub pair: String,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct TopkArgs {
    /// Model file to read
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of ranked coefficients after the normalization row
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Directory for residuals, normalizers, uniform series and CDF tables
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct RegionArgs {
    /// Model file to read
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub threshold: f64,
    /// Grid resolution per axis (suited to dimension ≤ 3)
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Monte Carlo sample count (the practical choice beyond dimension 3)
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => run_fit(args),
        Command::Eval(args) => run_eval(args),
        Command::Matrix(args) => run_matrix(args),
        Command::Grid(args) => run_grid(args),
        Command::Topk(args) => run_topk(args),
        Command::Normalize(args) => run_normalize(args),
        Command::Region(args) => run_region(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn ingest_series(input: &InputArgs, columns: Option<&Vec<String>>) -> Result<RawSeries> {
    if input.from_yields {
        let table = ingest::load_yield_table(&input.input, input.date_column.as_deref())?;
        let lambda = input.lambda.unwrap_or(dieboldli::DEFAULT_LAMBDA);
        let factors = dieboldli::fit_factors(&table, lambda)?;
        match columns {
            Some(cols) => Ok(factors.select_columns(cols)?),
            None => Ok(factors),
        }
    } else {
        if input.lambda.is_some() {
            return Err(CliError::Usage(
                "--lambda only applies together with --from-yields".into(),
            ));
        }
        let columns = columns.ok_or_else(|| {
            CliError::Usage("--columns is required unless --from-yields is set".into())
        })?;
        if columns.is_empty() {
            return Err(CliError::Usage("--columns must name at least one column".into()));
        }
        ingest::load_raw_series(&input.input, columns, input.date_column.as_deref())
    }
}

fn parse_normalizer(name: &str) -> Result<NormalizerKind> {
    name.parse::<NormalizerKind>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// "a..b" (inclusive integer range) or a comma list.
fn parse_index_list(s: &str, what: &str) -> Result<Vec<usize>> {
    let items: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a
            .parse()
            .map_err(|_| CliError::Usage(format!("bad {what} range '{s}'")))?;
        let hi: usize = b
            .parse()
            .map_err(|_| CliError::Usage(format!("bad {what} range '{s}'")))?;
        if lo > hi {
            return Err(CliError::Usage(format!("empty {what} range '{s}'")));
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad {what} value '{item}'")))
            })
            .collect::<Result<_>>()?
    };
    if items.is_empty() {
        return Err(CliError::Usage(format!("no {what} values in '{s}'")));
    }
    Ok(items)
}

fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: i64 = a
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold range '{s}'")))?;
        let hi: i64 = b
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold range '{s}'")))?;
        if lo > hi {
            return Err(CliError::Usage(format!("empty threshold range '{s}'")));
        }
        Ok((lo..=hi).map(|t| t as f64).collect())
    } else {
        let items: Vec<f64> = s
            .split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad threshold '{item}'")))
            })
            .collect::<Result<_>>()?;
        if items.is_empty() {
            return Err(CliError::Usage(format!("no thresholds in '{s}'")));
        }
        Ok(items)
    }
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Model::from_text(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Normalize a raw series with a model's stored parameters and stack its
/// context vectors.
fn vectors_for_model(model: &Model, raw: &RawSeries) -> Result<Array2<f64>> {
    let selected = raw.select_columns(&model.config.variables)?;
    let res = difference_series(&selected)?;
    let u = normalize_series(&res, &model.normalizers)?;
    Ok(build_vectors(&u, &model.config.variables, model.config.order)?)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn run_fit(args: FitArgs) -> Result<()> {
    let series = ingest_series(&args.input, args.columns.as_ref())?;
    let config = ModelConfig {
        variables: series.names().to_vec(),
        order: args.order,
        degree: args.degree,
        normalizer: parse_normalizer(&args.normalizer)?,
        prune_sigmas: args.prune_sigmas,
    };
    let model = fit(&config, &series)?;
    write_file(&args.output, &model.to_text())?;
    println!(
        "fit: {} variables, order {}, degree {}: {} coefficients from {} vectors -> {}",
        config.variables.len(),
        config.order,
        config.degree,
        model.coeffs.len(),
        model.coeffs.sample_size(),
        args.output.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let thresholds = parse_thresholds(&args.thresholds)?;
    let (report, config) = if let Some(model_path) = &args.model {
        if args.columns.is_some()
            || args.degree.is_some()
            || args.order.is_some()
            || args.normalizer.is_some()
            || args.prune_sigmas.is_some()
            || args.test_fraction.is_some()
        {
            return Err(CliError::Usage(
                "--model conflicts with the fit flags (--columns, --degree, --order, \
                 --normalizer, --prune-sigmas, --test-fraction)"
                    .into(),
            ));
        }
        let model = load_model(model_path)?;
        let series = ingest_series(&args.input, Some(&model.config.variables))?;
        let vectors = vectors_for_model(&model, &series)?;
        let report = evaluate(&model, vectors.view(), &thresholds, Some(args.seed))?;
        let config = model.config.clone();
        (report, config)
    } else {
        let degree = args.degree.ok_or_else(|| {
            CliError::Usage("either --model or the fit flags (--degree at least) are required".into())
        })?;
        let series = ingest_series(&args.input, args.columns.as_ref())?;
        let config = ModelConfig {
            variables: series.names().to_vec(),
            order: args.order.unwrap_or(0),
            degree,
            normalizer: parse_normalizer(args.normalizer.as_deref().unwrap_or("laplace"))?,
            prune_sigmas: args.prune_sigmas,
        };
        let fraction = args.test_fraction.unwrap_or(0.25);
        let (_, report) = holdout_evaluate(&config, &series, fraction, args.seed, &thresholds)?;
        (report, config)
    };
    write_file(&args.output, &write_eval_report(&report, Some(&config)))?;
    println!(
        "eval: seed {}, {} train / {} test, negative fraction {:.4} -> {}",
        args.seed,
        report.n_train,
        report.n_test,
        report.negative_fraction,
        args.output.display()
    );
    Ok(())
}

fn run_matrix(args: MatrixArgs) -> Result<()> {
    let series = ingest_series(&args.input, args.columns.as_ref())?;
    let orders = parse_index_list(&args.orders, "order")?;
    let degrees = parse_index_list(&args.degrees, "degree")?;
    let thresholds = parse_thresholds(&args.thresholds)?;
    let normalizer = parse_normalizer(&args.normalizer)?;
    let entries = evaluate_matrix(
        &series,
        &[series.names().to_vec()],
        &orders,
        &degrees,
        normalizer,
        args.test_fraction,
        args.seed,
        &thresholds,
    )?;
    std::fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.output.display())))?;
    for entry in &entries {
        let config = ModelConfig {
            variables: entry.variables.clone(),
            order: entry.order,
            degree: entry.degree,
            normalizer,
            prune_sigmas: None,
        };
        let name = format!("report_order{}_degree{}.csv", entry.order, entry.degree);
        write_file(
            &args.output.join(&name),
            &write_eval_report(&entry.report, Some(&config)),
        )?;
        println!(
            "matrix: order {} degree {}: negative fraction {:.4}, mean density {:.4}",
            entry.order,
            entry.degree,
            entry.report.negative_fraction,
            entry.report.mean_density()
        );
    }
    println!(
        "matrix: seed {}, {} reports -> {}",
        args.seed,
        entries.len(),
        args.output.display()
    );
    Ok(())
}

fn run_grid(args: GridArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (a, b) = args
        .pair
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("--pair expects i,j, got '{}'", args.pair)))?;
    let pair: (usize, usize) = (
        a.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad pair index '{a}'")))?,
        b.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad pair index '{b}'")))?,
    );
    let names = model.coordinate_names();
    let d = names.len();
    if pair.0 >= d || pair.1 >= d {
        return Err(CliError::Usage(format!(
            "pair ({}, {}) outside the model's {} coordinates",
            pair.0, pair.1, d
        )));
    }
    let sheet = hcr::report::emit_pair_grid(
        &model.coeffs,
        pair,
        (names[pair.0].clone(), names[pair.1].clone()),
        args.resolution,
        None,
    )?;
    write_file(&args.output, &write_grid(&sheet))?;
    println!(
        "grid: {} x {} over ({}, {}) -> {}",
        args.resolution,
        args.resolution,
        names[pair.0],
        names[pair.1],
        args.output.display()
    );
    Ok(())
}

fn run_topk(args: TopkArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let series = ingest_series(&args.input, Some(&model.config.variables))?;
    let vectors = vectors_for_model(&model, &series)?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let ranking = model.coeffs.top_k(vectors.view(), args.k)?;
    write_file(
        &args.output,
        &write_coefficient_table(&ranking, model.config.degree),
    )?;
    println!(
        "topk: {} ranked rows, baseline sigma {} -> {}",
        ranking.rows.len(),
        fmt_f64(ranking.baseline_sigma),
        args.output.display()
    );
    Ok(())
}

fn run_normalize(args: NormalizeArgs) -> Result<()> {
    let series = ingest_series(&args.input, args.columns.as_ref())?;
    let res = difference_series(&series)?;
    let laplace: Vec<NormalizerParams> = (0..res.n_vars())
        .map(|i| fit_laplace(&res.column(i)))
        .collect::<hcr::Result<_>>()?;
    let gaussian: Vec<NormalizerParams> = (0..res.n_vars())
        .map(|i| fit_gaussian(&res.column(i)))
        .collect::<hcr::Result<_>>()?;
    let uniform = normalize_series(&res, &laplace)?;

    std::fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.output.display())))?;

    let table_of = |values: &Array2<f64>| {
        let mut out = format!("{}\n", res.names().join(","));
        for row in values.rows() {
            let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    };
    write_file(&args.output.join("residuals.csv"), &table_of(res.values()))?;
    write_file(&args.output.join("uniform.csv"), &table_of(uniform.values()))?;

    let mut params_table = String::from("variable,kind,location,scale\n");
    for (i, name) in res.names().iter().enumerate() {
        for p in [&laplace[i], &gaussian[i]] {
            params_table.push_str(&format!(
                "{},{},{},{}\n",
                name,
                p.kind,
                fmt_f64(p.location),
                fmt_f64(p.scale)
            ));
        }
    }
    write_file(&args.output.join("normalizers.csv"), &params_table)?;

    for (i, name) in res.names().iter().enumerate() {
        let mut table = String::from("value,empirical,laplace,gaussian\n");
        for (value, rank) in empirical_cdf(&res.column(i))? {
            table.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(value),
                fmt_f64(rank),
                fmt_f64(laplace[i].cdf(value)),
                fmt_f64(gaussian[i].cdf(value))
            ));
        }
        write_file(&args.output.join(format!("cdf_{name}.csv")), &table)?;
    }
    println!(
        "normalize: {} variables, {} residual rows -> {}",
        res.n_vars(),
        res.n_rows(),
        args.output.display()
    );
    Ok(())
}

fn run_region(args: RegionArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let d = model.config.dimension();
    let method = match (args.resolution, args.mc_samples) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--resolution and --mc-samples are mutually exclusive".into(),
            ))
        }
        (Some(r), None) => RegionMethod::Grid { resolution: r },
        (None, Some(samples)) => RegionMethod::MonteCarlo {
            samples,
            seed: args.seed,
        },
        // Grid for low dimension, the documented 10^6-sample Monte Carlo
        // default beyond that.
        (None, None) => {
            if d <= 3 {
                RegionMethod::Grid { resolution: 200 }
            } else {
                RegionMethod::MonteCarlo {
                    samples: 1_000_000,
                    seed: args.seed,
                }
            }
        }
    };
    let stats = model.coeffs.region_stats(args.threshold, &method)?;

    let mut out = String::from("format,hcr-region,1\n");
    out.push_str(&format!("threshold,{}\n", args.threshold));
    match method {
        RegionMethod::Grid { resolution } => out.push_str(&format!("method,grid,{resolution}\n")),
        RegionMethod::MonteCarlo { samples, seed } => {
            out.push_str(&format!("method,monte-carlo,{samples},seed,{seed}\n"))
        }
    }
    out.push_str(&format!(
        "volume_fraction,{}\n",
        fmt_f64(stats.volume_fraction)
    ));
    out.push_str(&format!("mass_fraction,{}\n", fmt_f64(stats.mass_fraction)));
    write_file(&args.output, &out)?;
    println!(
        "region: density > {}: volume fraction {:.4}, mass fraction {:.4} -> {}",
        args.threshold,
        stats.volume_fraction,
        stats.mass_fraction,
        args.output.display()
    );
    Ok(())
}
