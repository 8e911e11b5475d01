//! Plot-ready tabular artifacts: sorted-density curves, threshold tables,
//! coefficient rankings, 2D density grids, and full evaluation reports.
//!
//! Everything is plain comma-separated text with a header row, `.` decimal
//! separator and no locale dependence. Floats are printed with 17
//! significant digits so every table round-trips through its own parser
//! byte for byte; rendering is left to external plotting tools.

use ndarray::{Array2, ArrayView2};

use crate::density::{CoefficientReport, CoefficientTensor};
use crate::error::{HcrError, Result};
use crate::model::{fmt_f64, EvaluationReport, ModelConfig};
use crate::normalize::NormalizerKind;

/// A marginal density evaluated on a regular grid of cell centers, with an
/// optional overlay of observed points projected onto the same pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSheet {
    pub names: (String, String),
    pub resolution: usize,
    /// `values[[i, j]]` is the density at the center of cell `(i, j)`:
    /// first coordinate `(i + 0.5)/r`, second `(j + 0.5)/r`.
    pub values: Array2<f64>,
    pub points: Vec<[f64; 2]>,
}

/// Marginalize `coeffs` onto `pair` and evaluate on an `r × r` grid of cell
/// centers (centers rather than corners, so the grid mean approximates the
/// integral). Sample points, when given, are projected onto the pair and
/// carried through for plotting.
pub fn emit_pair_grid(
    coeffs: &CoefficientTensor,
    pair: (usize, usize),
    names: (String, String),
    resolution: usize,
    sample: Option<ArrayView2<'_, f64>>,
) -> Result<GridSheet> {
    if resolution < 2 {
        return Err(HcrError::InvalidInput(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    if pair.0 == pair.1 {
        return Err(HcrError::InvalidInput(
            "grid needs two distinct coordinates".into(),
        ));
    }
    let keep = if pair.0 < pair.1 {
        [pair.0, pair.1]
    } else {
        [pair.1, pair.0]
    };
    let marginal = coeffs.marginalize(&keep)?;
    let swapped = pair.0 > pair.1;

    let r = resolution;
    let mut values = Array2::zeros((r, r));
    for i in 0..r {
        let a = (i as f64 + 0.5) / r as f64;
        for j in 0..r {
            let b = (j as f64 + 0.5) / r as f64;
            let x = if swapped { [b, a] } else { [a, b] };
            values[[i, j]] = marginal.evaluate(&x)?;
        }
    }

    let mut points = Vec::new();
    if let Some(sample) = sample {
        if pair.0 >= sample.ncols() || pair.1 >= sample.ncols() {
            return Err(HcrError::InvalidInput(format!(
                "pair ({}, {}) outside sample of {} coordinates",
                pair.0,
                pair.1,
                sample.ncols()
            )));
        }
        for row in sample.rows() {
            points.push([row[pair.0], row[pair.1]]);
        }
    }
    Ok(GridSheet {
        names,
        resolution,
        values,
        points,
    })
}

/// Serialize a grid: cell records first (row-major), then overlay points
/// with an empty density field.
pub fn write_grid(sheet: &GridSheet) -> String {
    let mut out = String::new();
    out.push_str(&format!("kind,{},{},density\n", sheet.names.0, sheet.names.1));
    let r = sheet.resolution;
    for i in 0..r {
        for j in 0..r {
            out.push_str(&format!(
                "cell,{},{},{}\n",
                fmt_f64((i as f64 + 0.5) / r as f64),
                fmt_f64((j as f64 + 0.5) / r as f64),
                fmt_f64(sheet.values[[i, j]])
            ));
        }
    }
    for p in &sheet.points {
        out.push_str(&format!("point,{},{},\n", fmt_f64(p[0]), fmt_f64(p[1])));
    }
    out
}

pub fn parse_grid(text: &str) -> Result<GridSheet> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HcrError::InvalidInput("empty grid file".into()))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 4 || fields[0] != "kind" || fields[3] != "density" {
        return Err(HcrError::InvalidInput(format!(
            "bad grid header '{header}'"
        )));
    }
    let names = (fields[1].to_string(), fields[2].to_string());
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for (no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(HcrError::InvalidInput(format!(
                "grid line {}: expected 4 fields",
                no + 2
            )));
        }
        let x = parse_f64(fields[1], no + 2)?;
        let y = parse_f64(fields[2], no + 2)?;
        match fields[0] {
            "cell" => cells.push(parse_f64(fields[3], no + 2)?),
            "point" => points.push([x, y]),
            other => {
                return Err(HcrError::InvalidInput(format!(
                    "grid line {}: unknown record kind '{other}'",
                    no + 2
                )))
            }
        }
    }
    let r = (cells.len() as f64).sqrt().round() as usize;
    if r < 2 || r * r != cells.len() {
        return Err(HcrError::InvalidInput(format!(
            "{} cells do not form a square grid",
            cells.len()
        )));
    }
    Ok(GridSheet {
        names,
        resolution: r,
        values: Array2::from_shape_vec((r, r), cells)
            .expect("cell count checked against shape"),
        points,
    })
}

/// Sorted-density curve: `(rank fraction, density)`, densities
/// non-increasing, one row per evaluation point.
pub fn write_sorted_curve(report: &EvaluationReport) -> String {
    let mut out = String::from("rank_fraction,density\n");
    let n = report.sorted_densities.len() as f64;
    for (i, &rho) in report.sorted_densities.iter().enumerate() {
        out.push_str(&format!(
            "{},{}\n",
            fmt_f64((i + 1) as f64 / n),
            fmt_f64(rho)
        ));
    }
    out
}

pub fn parse_sorted_curve(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("rank_fraction,density") => {}
        other => {
            return Err(HcrError::InvalidInput(format!(
                "bad curve header {other:?}"
            )))
        }
    }
    lines
        .enumerate()
        .map(|(no, line)| {
            let (a, b) = line.split_once(',').ok_or_else(|| {
                HcrError::InvalidInput(format!("curve line {}: expected 2 fields", no + 2))
            })?;
            Ok((parse_f64(a, no + 2)?, parse_f64(b, no + 2)?))
        })
        .collect()
}

/// Threshold table: `(threshold, fraction, percent)` per configured
/// threshold, fractions non-increasing.
pub fn write_threshold_table(report: &EvaluationReport) -> String {
    let mut out = String::from("threshold,fraction,percent\n");
    for (&t, &frac) in report.thresholds.iter().zip(&report.threshold_fractions) {
        out.push_str(&format!("{},{},{:.2}%\n", t, fmt_f64(frac), frac * 100.0));
    }
    out
}

pub fn parse_threshold_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("threshold,fraction,percent") => {}
        other => {
            return Err(HcrError::InvalidInput(format!(
                "bad threshold header {other:?}"
            )))
        }
    }
    lines
        .enumerate()
        .map(|(no, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(HcrError::InvalidInput(format!(
                    "threshold line {}: expected 3 fields",
                    no + 2
                )));
            }
            Ok((parse_f64(fields[0], no + 2)?, parse_f64(fields[1], no + 2)?))
        })
        .collect()
}

/// Render a multi-index: compact digit string (`"110"`) while the basis
/// degree stays single-digit, comma-separated (quoted in CSV context)
/// otherwise.
pub fn format_index(components: &[u32], degree: usize) -> String {
    if degree <= 9 {
        components.iter().map(|j| j.to_string()).collect()
    } else {
        components
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Coefficient ranking table: `(index, value, sigma, z)`, normalization row
/// first.
pub fn write_coefficient_table(report: &CoefficientReport, degree: usize) -> String {
    let mut out = String::from("index,value,sigma,z\n");
    for row in &report.rows {
        let index = format_index(row.index.components(), degree);
        let index = if index.contains(',') {
            format!("\"{index}\"")
        } else {
            index
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            index,
            fmt_f64(row.value),
            fmt_f64(row.sigma),
            fmt_f64(row.z)
        ));
    }
    out
}

/// One parsed coefficient-table row: `(components, value, sigma, z)`.
pub type ParsedCoefficientRow = (Vec<u32>, f64, f64, f64);

/// Parse a coefficient table back into its rows.
pub fn parse_coefficient_table(text: &str) -> Result<Vec<ParsedCoefficientRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("index,value,sigma,z") => {}
        other => {
            return Err(HcrError::InvalidInput(format!(
                "bad coefficient header {other:?}"
            )))
        }
    }
    lines
        .enumerate()
        .map(|(no, line)| {
            let bad =
                |what: &str| HcrError::InvalidInput(format!("coefficient line {}: {what}", no + 2));
            let (index_str, rest) = if let Some(stripped) = line.strip_prefix('"') {
                let (index, rest) = stripped
                    .split_once('"')
                    .ok_or_else(|| bad("unterminated quote"))?;
                (
                    index.to_string(),
                    rest.strip_prefix(',').ok_or_else(|| bad("missing comma"))?,
                )
            } else {
                let (index, rest) = line.split_once(',').ok_or_else(|| bad("missing comma"))?;
                (index.to_string(), rest)
            };
            let components: Vec<u32> = if index_str.contains(',') {
                index_str
                    .split(',')
                    .map(|c| c.parse().map_err(|_| bad("bad index component")))
                    .collect::<Result<_>>()?
            } else {
                index_str
                    .chars()
                    .map(|c| {
                        c.to_digit(10)
                            .ok_or_else(|| bad("bad index digit"))
                    })
                    .collect::<Result<_>>()?
            };
            let fields: Vec<&str> = rest.split(',').collect();
            if fields.len() != 3 {
                return Err(bad("expected value, sigma, z"));
            }
            Ok((
                components,
                parse_f64(fields[0], no + 2)?,
                parse_f64(fields[1], no + 2)?,
                parse_f64(fields[2], no + 2)?,
            ))
        })
        .collect()
}

/// Full evaluation report: metadata block, optional model configuration,
/// then the threshold table and sorted curve as sections.
pub fn write_eval_report(report: &EvaluationReport, config: Option<&ModelConfig>) -> String {
    let mut out = String::from("format,hcr-report,1\n");
    match report.seed {
        Some(seed) => out.push_str(&format!("seed,{seed}\n")),
        None => out.push_str("seed,none\n"),
    }
    out.push_str(&format!("n_train,{}\n", report.n_train));
    out.push_str(&format!("n_test,{}\n", report.n_test));
    out.push_str(&format!(
        "negative_fraction,{}\n",
        fmt_f64(report.negative_fraction)
    ));
    if let Some(config) = config {
        out.push_str(&format!("variables,{}\n", config.variables.join(",")));
        out.push_str(&format!("order,{}\n", config.order));
        out.push_str(&format!("degree,{}\n", config.degree));
        out.push_str(&format!("normalizer,{}\n", config.normalizer));
        match config.prune_sigmas {
            Some(s) => out.push_str(&format!("prune_sigmas,{}\n", fmt_f64(s))),
            None => out.push_str("prune_sigmas,none\n"),
        }
    }
    out.push_str("thresholds\n");
    out.push_str(&write_threshold_table(report));
    out.push_str("curve\n");
    out.push_str(&write_sorted_curve(report));
    out
}

pub fn parse_eval_report(text: &str) -> Result<(EvaluationReport, Option<ModelConfig>)> {
    let lines: Vec<&str> = text.lines().collect();
    let bad = |no: usize, what: &str| HcrError::InvalidInput(format!("report line {}: {what}", no + 1));
    if lines.first() != Some(&"format,hcr-report,1") {
        return Err(HcrError::InvalidInput("unsupported report format".into()));
    }
    let mut seed = None;
    let mut n_train = None;
    let mut n_test = None;
    let mut negative_fraction = None;
    let mut variables: Option<Vec<String>> = None;
    let mut order = None;
    let mut degree = None;
    let mut normalizer: Option<NormalizerKind> = None;
    let mut prune_sigmas: Option<Option<f64>> = None;

    let mut pos = 1;
    while pos < lines.len() && lines[pos] != "thresholds" {
        let line = lines[pos];
        let (key, value) = line
            .split_once(',')
            .ok_or_else(|| bad(pos, "expected key,value"))?;
        match key {
            "seed" => {
                seed = Some(match value {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| bad(pos, "bad seed"))?),
                })
            }
            "n_train" => n_train = Some(value.parse().map_err(|_| bad(pos, "bad n_train"))?),
            "n_test" => n_test = Some(value.parse().map_err(|_| bad(pos, "bad n_test"))?),
            "negative_fraction" => negative_fraction = Some(parse_f64(value, pos + 1)?),
            "variables" => variables = Some(value.split(',').map(str::to_string).collect()),
            "order" => order = Some(value.parse().map_err(|_| bad(pos, "bad order"))?),
            "degree" => degree = Some(value.parse().map_err(|_| bad(pos, "bad degree"))?),
            "normalizer" => normalizer = Some(value.parse()?),
            "prune_sigmas" => {
                prune_sigmas = Some(match value {
                    "none" => None,
                    v => Some(parse_f64(v, pos + 1)?),
                })
            }
            other => return Err(bad(pos, &format!("unknown key '{other}'"))),
        }
        pos += 1;
    }
    if pos >= lines.len() {
        return Err(HcrError::InvalidInput(
            "report has no thresholds section".into(),
        ));
    }
    pos += 1; // past "thresholds"
    let curve_pos = lines[pos..]
        .iter()
        .position(|&l| l == "curve")
        .map(|p| p + pos)
        .ok_or_else(|| HcrError::InvalidInput("report has no curve section".into()))?;
    let threshold_text = lines[pos..curve_pos].join("\n");
    let pairs = parse_threshold_table(&threshold_text)?;
    let curve_text = lines[curve_pos + 1..].join("\n");
    let curve = parse_sorted_curve(&curve_text)?;

    let report = EvaluationReport {
        sorted_densities: curve.iter().map(|&(_, rho)| rho).collect(),
        thresholds: pairs.iter().map(|&(t, _)| t).collect(),
        threshold_fractions: pairs.iter().map(|&(_, f)| f).collect(),
        negative_fraction: negative_fraction
            .ok_or_else(|| HcrError::InvalidInput("report missing negative_fraction".into()))?,
        n_train: n_train.ok_or_else(|| HcrError::InvalidInput("report missing n_train".into()))?,
        n_test: n_test.ok_or_else(|| HcrError::InvalidInput("report missing n_test".into()))?,
        seed: seed.ok_or_else(|| HcrError::InvalidInput("report missing seed".into()))?,
    };
    let config = match (variables, order, degree, normalizer, prune_sigmas) {
        (Some(variables), Some(order), Some(degree), Some(normalizer), Some(prune_sigmas)) => {
            Some(ModelConfig {
                variables,
                order,
                degree,
                normalizer,
                prune_sigmas,
            })
        }
        (None, None, None, None, None) => None,
        _ => {
            return Err(HcrError::InvalidInput(
                "report has a partial model configuration block".into(),
            ))
        }
    };
    Ok((report, config))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| HcrError::InvalidInput(format!("line {line}: bad number '{s}'")))
}
