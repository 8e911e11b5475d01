//! CSV ingestion: plain comma-separated files with a header row, an optional
//! date-label column, and numeric data columns. Parse failures report the
//! offending row and column.

use std::path::Path;

use hcr::RawSeries;
use ndarray::Array2;

use crate::errors::{CliError, Result};

/// A per-date table of yields over a fixed maturity grid (months).
pub struct YieldTable {
    pub dates: Vec<String>,
    pub maturities: Vec<f64>,
    /// One row per date, one column per maturity, percent per annum.
    pub yields: Array2<f64>,
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?;
    let names: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != names.len() {
            return Err(CliError::Data(format!(
                "{}: row {} has {} cells, header has {}",
                path.display(),
                no + 2,
                cells.len(),
                names.len()
            )));
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    Ok((names, rows))
}

fn parse_cell(cell: &str, row: usize, column: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{}: row {row}, column '{column}': cannot parse '{cell}' as a number",
            path.display()
        ))
    })
}

/// Load the named numeric columns as a raw series, in the order given.
pub fn load_raw_series(
    path: &Path,
    columns: &[String],
    date_column: Option<&str>,
) -> Result<RawSeries> {
    let (names, rows) = read_rows(path)?;
    let find = |name: &str| -> Result<usize> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::Data(format!(
                "{}: no column named '{name}' (have: {})",
                path.display(),
                names.join(", ")
            ))
        })
    };
    let date_idx = date_column.map(find).transpose()?;
    let col_idx: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(rows.len() * col_idx.len());
    let mut times = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        times.push(match date_idx {
            Some(i) => row[i].clone(),
            None => r.to_string(),
        });
        for &c in &col_idx {
            values.push(parse_cell(&row[c], r + 2, &names[c], path)?);
        }
    }
    let values = Array2::from_shape_vec((rows.len(), col_idx.len()), values)
        .expect("cell count matches shape");
    Ok(RawSeries::with_times(columns.to_vec(), times, values)?)
}

/// Load a yield table: every non-date column whose header parses as a
/// positive number is a maturity in months. Columns are sorted by maturity.
pub fn load_yield_table(path: &Path, date_column: Option<&str>) -> Result<YieldTable> {
    let (names, rows) = read_rows(path)?;
    let date_idx = match date_column {
        Some(name) => Some(names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::Data(format!("{}: no column named '{name}'", path.display()))
        })?),
        None => None,
    };
    let mut maturity_cols: Vec<(f64, usize)> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if Some(i) == date_idx {
            continue;
        }
        let maturity: f64 = name.parse().map_err(|_| {
            CliError::Data(format!(
                "{}: column '{name}' is not a numeric maturity; name maturity columns in \
                 months or point --date-column at the label column",
                path.display()
            ))
        })?;
        if maturity <= 0.0 {
            return Err(CliError::Data(format!(
                "{}: maturity column '{name}' must be positive",
                path.display()
            )));
        }
        maturity_cols.push((maturity, i));
    }
    maturity_cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    if maturity_cols.len() < 3 {
        return Err(CliError::Data(format!(
            "{}: need at least 3 maturity columns to fit 3 factor loadings, found {}",
            path.display(),
            maturity_cols.len()
        )));
    }
    if maturity_cols.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(CliError::Data(format!(
            "{}: duplicate maturity columns",
            path.display()
        )));
    }

    let mut yields = Vec::with_capacity(rows.len() * maturity_cols.len());
    let mut dates = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        dates.push(match date_idx {
            Some(i) => row[i].clone(),
            None => r.to_string(),
        });
        for &(_, c) in &maturity_cols {
            yields.push(parse_cell(&row[c], r + 2, &names[c], path)?);
        }
    }
    Ok(YieldTable {
        dates,
        maturities: maturity_cols.iter().map(|&(m, _)| m).collect(),
        yields: Array2::from_shape_vec((rows.len(), maturity_cols.len()), yields)
            .expect("cell count matches shape"),
    })
}
