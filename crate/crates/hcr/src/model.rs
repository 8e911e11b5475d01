//! Pipeline assembly: context vectors, fitting, prediction and evaluation.
//!
//! A model of order `k` treats the current normalized values together with
//! the `k` previous time steps as one point in `[0,1]^d`, `d = v·(k+1)`;
//! order 0 is context-free, order 1 the continuous analogue of a Markov
//! chain. Coordinate layout is fixed and documented: current variables
//! first, then lag 1, lag 2, … — coefficient indices are meaningless
//! without it.
//!
//! Train/test evaluation reports the distribution of predicted densities at
//! held-out observed points (the higher, the better the probabilistic
//! prediction) plus threshold-exceedance fractions. Overfitting is reported,
//! not prevented: a million-coefficient fit to a few thousand points will
//! look perfect on its own training set and collapse on the held-out one.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSpec;
use crate::density::CoefficientTensor;
use crate::error::{HcrError, Result};
use crate::normalize::{
    difference_series, fit_gaussian, fit_laplace, normalize_series, NormalizerKind,
    NormalizerParams, RawSeries, ResidualSeries, UniformSeries,
};

/// The integer threshold grid 0..=10 used by default in reports.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

/// Everything needed to fit a model: which variables, how much context,
/// what degree, and how to normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variables: Vec<String>,
    /// Number of previous time steps appended as context coordinates.
    pub order: usize,
    /// Maximum per-coordinate polynomial degree.
    pub degree: usize,
    pub normalizer: NormalizerKind,
    /// Optional significance cut, in sigmas, applied after estimation.
    pub prune_sigmas: Option<f64>,
}

impl ModelConfig {
    pub fn dimension(&self) -> usize {
        self.variables.len() * (self.order + 1)
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        BasisSpec::new(self.dimension(), self.degree)
    }

    fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(HcrError::InvalidInput(
                "model needs at least one variable".into(),
            ));
        }
        for (i, name) in self.variables.iter().enumerate() {
            if self.variables[..i].contains(name) {
                return Err(HcrError::InvalidInput(format!(
                    "duplicate variable '{name}'"
                )));
            }
        }
        if let Some(s) = self.prune_sigmas {
            if s < 0.0 || s.is_nan() {
                return Err(HcrError::InvalidInput(format!(
                    "prune threshold must be non-negative, got {s}"
                )));
            }
        }
        self.basis_spec().map(|_| ())
    }
}

/// A fitted pipeline: per-variable normalizers plus the coefficient tensor
/// over the context coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub normalizers: Vec<NormalizerParams>,
    pub coeffs: CoefficientTensor,
}

/// Distribution of predicted densities at evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Predicted densities at the observed points, non-increasing.
    pub sorted_densities: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Fraction of points with density strictly above each threshold.
    pub threshold_fractions: Vec<f64>,
    /// Fraction of points with non-positive density; equals
    /// `1 − fraction_above(0)` by construction.
    pub negative_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: Option<u64>,
}

impl EvaluationReport {
    pub fn fraction_above(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.threshold_fractions[i])
    }

    pub fn mean_density(&self) -> f64 {
        self.sorted_densities.iter().sum::<f64>() / self.sorted_densities.len() as f64
    }
}

/// One cell of the model-comparison matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEntry {
    pub variables: Vec<String>,
    pub order: usize,
    pub degree: usize,
    pub report: EvaluationReport,
}

/// Stack the current variables and `order` lagged copies into sample
/// vectors: row `i` describes time `t = order + i` as
/// `(vars(t), vars(t−1), …, vars(t−order))`.
pub fn build_vectors(u: &UniformSeries, variables: &[String], order: usize) -> Result<Array2<f64>> {
    let columns: Vec<usize> = variables
        .iter()
        .map(|name| {
            u.names()
                .iter()
                .position(|have| have == name)
                .ok_or_else(|| HcrError::InvalidInput(format!("unknown variable '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n1 = u.n_rows();
    if n1 <= order {
        return Err(HcrError::InvalidInput(format!(
            "series of {n1} residual rows cannot supply order-{order} context"
        )));
    }
    let v = columns.len();
    let d = v * (order + 1);
    let n = n1 - order;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let t = order + i;
        for lag in 0..=order {
            for (slot, &col) in columns.iter().enumerate() {
                out[[i, lag * v + slot]] = u.values()[[t - lag, col]];
            }
        }
    }
    Ok(out)
}

fn fit_normalizer(kind: NormalizerKind, samples: &[f64]) -> Result<NormalizerParams> {
    match kind {
        NormalizerKind::Laplace => fit_laplace(samples),
        NormalizerKind::Gaussian => fit_gaussian(samples),
    }
}

fn fit_normalizers_on_rows(
    res: &ResidualSeries,
    kind: NormalizerKind,
    rows: Option<&[usize]>,
) -> Result<Vec<NormalizerParams>> {
    (0..res.n_vars())
        .map(|col| {
            let column = res.column(col);
            let samples: Vec<f64> = match rows {
                Some(rows) => rows.iter().map(|&r| column[r]).collect(),
                None => column,
            };
            fit_normalizer(kind, &samples)
        })
        .collect()
}

/// Fit the full pipeline on a raw series: difference, fit normalizers on the
/// whole residual sample, normalize, build context vectors, estimate, and
/// optionally prune.
pub fn fit(config: &ModelConfig, raw: &RawSeries) -> Result<Model> {
    config.validate()?;
    let selected = raw.select_columns(&config.variables)?;
    let res = difference_series(&selected)?;
    let normalizers = fit_normalizers_on_rows(&res, config.normalizer, None)?;
    let u = normalize_series(&res, &normalizers)?;
    let sample = build_vectors(&u, &config.variables, config.order)?;
    let spec = config.basis_spec()?;
    let mut coeffs = CoefficientTensor::estimate(sample.view(), &spec)?;
    if let Some(threshold) = config.prune_sigmas {
        coeffs = coeffs.prune(sample.view(), threshold)?;
    }
    Ok(Model {
        config: config.clone(),
        normalizers,
        coeffs,
    })
}

impl Model {
    /// Labels for the context coordinates, current variables first.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.config.dimension());
        for lag in 0..=self.config.order {
            for v in &self.config.variables {
                if lag == 0 {
                    names.push(format!("{v}(t)"));
                } else {
                    names.push(format!("{v}(t-{lag})"));
                }
            }
        }
        names
    }

    /// Turn the trailing rows of a raw window into one normalized context
    /// vector. Needs `order + 2` raw rows (one extra for differencing).
    fn context_vector(&self, recent: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let v = self.config.variables.len();
        let need = self.config.order + 2;
        if recent.nrows() < need {
            return Err(HcrError::InvalidInput(format!(
                "order-{} prediction needs {} raw rows, got {}",
                self.config.order,
                need,
                recent.nrows()
            )));
        }
        if recent.ncols() != v {
            return Err(HcrError::InvalidInput(format!(
                "expected {} variable columns, got {}",
                v,
                recent.ncols()
            )));
        }
        let rows = recent.nrows();
        let window = recent.slice(ndarray::s![rows - need.., ..]);
        let raw = RawSeries::new(self.config.variables.clone(), window.to_owned())?;
        let res = difference_series(&raw)?;
        let u = normalize_series(&res, &self.normalizers)?;
        // Residual rows 0..=order; the last row is the current value.
        let mut x = Vec::with_capacity(self.config.dimension());
        for lag in 0..=self.config.order {
            let row = self.config.order - lag;
            for col in 0..v {
                x.push(u.values()[[row, col]]);
            }
        }
        Ok(x)
    }

    /// Joint density at the realized current point given its context.
    pub fn predict_density(&self, recent: ArrayView2<'_, f64>) -> Result<f64> {
        let x = self.context_vector(recent)?;
        self.coeffs.evaluate(&x)
    }

    /// Conditional density slice over the current variables given the lagged
    /// context. For an order-0 model this is the joint itself.
    pub fn predict_slice(
        &self,
        recent: ArrayView2<'_, f64>,
        renormalize: bool,
    ) -> Result<CoefficientTensor> {
        let x = self.context_vector(recent)?;
        let v = self.config.variables.len();
        let ctx_coords: Vec<usize> = (v..self.config.dimension()).collect();
        self.coeffs
            .condition_slice(&ctx_coords, &x[v..], renormalize)
    }
}

/// Reproducible disjoint-and-exhaustive split of `0..n`.
///
/// The index set is shuffled by a Fisher–Yates pass driven by ChaCha8 seeded
/// with `seed`; the first `round(n·test_fraction)` indices (ties round up)
/// become the test side. Both sides are returned sorted.
pub fn split_indices(
    n: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(HcrError::InvalidInput(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let test_size = (n as f64 * test_fraction + 0.5).floor() as usize;
    if test_size == 0 || test_size >= n {
        return Err(HcrError::InvalidInput(format!(
            "split of {n} points at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut test: Vec<usize> = order[..test_size].to_vec();
    let mut train: Vec<usize> = order[test_size..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Predicted densities at the given points, sorted descending, with
/// threshold-exceedance fractions (strict inequality).
pub fn evaluate(
    model: &Model,
    test: ArrayView2<'_, f64>,
    thresholds: &[f64],
    seed: Option<u64>,
) -> Result<EvaluationReport> {
    if test.nrows() == 0 {
        return Err(HcrError::InvalidInput("empty evaluation set".into()));
    }
    let mut densities = model.coeffs.evaluate_many(test)?;
    densities.sort_unstable_by(|a, b| b.total_cmp(a));
    let n = densities.len() as f64;
    let fraction_above =
        |t: f64| densities.iter().filter(|&&rho| rho > t).count() as f64 / n;
    let threshold_fractions: Vec<f64> = thresholds.iter().map(|&t| fraction_above(t)).collect();
    let negative_fraction = 1.0 - fraction_above(0.0);
    Ok(EvaluationReport {
        sorted_densities: densities,
        thresholds: thresholds.to_vec(),
        threshold_fractions,
        negative_fraction,
        n_train: model.coeffs.sample_size(),
        n_test: test.nrows(),
        seed,
    })
}

/// Split the context vectors, fit on the training side only (normalizers
/// included, to prevent leakage), and evaluate on the held-out side.
pub fn holdout_evaluate(
    config: &ModelConfig,
    raw: &RawSeries,
    test_fraction: f64,
    seed: u64,
    thresholds: &[f64],
) -> Result<(Model, EvaluationReport)> {
    config.validate()?;
    let selected = raw.select_columns(&config.variables)?;
    let res = difference_series(&selected)?;
    let n1 = res.n_rows();
    if n1 <= config.order {
        return Err(HcrError::InvalidInput(format!(
            "{n1} residual rows cannot supply order-{} context",
            config.order
        )));
    }
    let (train_idx, test_idx) = split_indices(n1 - config.order, test_fraction, seed)?;

    // Normalizers see only the current-value rows of training vectors.
    let train_rows: Vec<usize> = train_idx.iter().map(|&i| config.order + i).collect();
    let normalizers = fit_normalizers_on_rows(&res, config.normalizer, Some(&train_rows))?;
    let u = normalize_series(&res, &normalizers)?;
    let vectors = build_vectors(&u, &config.variables, config.order)?;

    let train = vectors.select(Axis(0), &train_idx);
    let test = vectors.select(Axis(0), &test_idx);
    let spec = config.basis_spec()?;
    let mut coeffs = CoefficientTensor::estimate(train.view(), &spec)?;
    if let Some(threshold) = config.prune_sigmas {
        coeffs = coeffs.prune(train.view(), threshold)?;
    }
    let model = Model {
        config: config.clone(),
        normalizers,
        coeffs,
    };
    let report = evaluate(&model, test.view(), thresholds, Some(seed))?;
    Ok((model, report))
}

/// Evaluate the cross product of variable sets × orders × degrees under one
/// shared split.
///
/// All models use the time positions valid for the largest order, so the
/// train/test partition refers to identical time points everywhere and the
/// resulting curves are directly comparable. Fits run concurrently; results
/// are merged in configuration order (sets outer, then orders, then degrees).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_matrix(
    raw: &RawSeries,
    variable_sets: &[Vec<String>],
    orders: &[usize],
    degrees: &[usize],
    normalizer: NormalizerKind,
    test_fraction: f64,
    seed: u64,
    thresholds: &[f64],
) -> Result<Vec<MatrixEntry>> {
    if variable_sets.is_empty() || orders.is_empty() || degrees.is_empty() {
        return Err(HcrError::InvalidInput(
            "matrix needs at least one variable set, order, and degree".into(),
        ));
    }
    let max_order = *orders.iter().max().expect("orders checked non-empty");
    let n1 = raw.n_rows().saturating_sub(1);
    if n1 <= max_order {
        return Err(HcrError::InvalidInput(format!(
            "{n1} residual rows cannot supply order-{max_order} context"
        )));
    }
    let (train_idx, test_idx) = split_indices(n1 - max_order, test_fraction, seed)?;
    let train_rows: Vec<usize> = train_idx.iter().map(|&i| max_order + i).collect();

    // Per-set preprocessing shared by every (order, degree) cell.
    struct SetData {
        variables: Vec<String>,
        uniform: UniformSeries,
    }
    let mut sets = Vec::with_capacity(variable_sets.len());
    for variables in variable_sets {
        let selected = raw.select_columns(variables)?;
        let res = difference_series(&selected)?;
        let normalizers = fit_normalizers_on_rows(&res, normalizer, Some(&train_rows))?;
        let uniform = normalize_series(&res, &normalizers)?;
        sets.push(SetData {
            variables: variables.clone(),
            uniform,
        });
    }

    let mut configs = Vec::new();
    for (set_pos, _) in sets.iter().enumerate() {
        for &order in orders {
            for &degree in degrees {
                configs.push((set_pos, order, degree));
            }
        }
    }

    let results: Vec<Mutex<Option<Result<MatrixEntry>>>> =
        (0..configs.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(configs.len());

    let compute = |&(set_pos, order, degree): &(usize, usize, usize)| -> Result<MatrixEntry> {
        let set = &sets[set_pos];
        let vectors = build_vectors(&set.uniform, &set.variables, order)?;
        // Vector i of this model describes time order + i; the shared split
        // indexes times max_order + p.
        let offset = max_order - order;
        let train_rows: Vec<usize> = train_idx.iter().map(|&p| p + offset).collect();
        let test_rows: Vec<usize> = test_idx.iter().map(|&p| p + offset).collect();
        let train = vectors.select(Axis(0), &train_rows);
        let test = vectors.select(Axis(0), &test_rows);
        let spec = BasisSpec::new(set.variables.len() * (order + 1), degree)?;
        let coeffs = CoefficientTensor::estimate(train.view(), &spec)?;
        let model = Model {
            config: ModelConfig {
                variables: set.variables.clone(),
                order,
                degree,
                normalizer,
                prune_sigmas: None,
            },
            normalizers: Vec::new(),
            coeffs,
        };
        let report = evaluate(&model, test.view(), thresholds, Some(seed))?;
        Ok(MatrixEntry {
            variables: set.variables.clone(),
            order,
            degree,
            report,
        })
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let entry = compute(&configs[i]);
                *results[i].lock().expect("result slot poisoned") = Some(entry);
            });
        }
    });

    results
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every configuration was computed")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Model persistence: a versioned, line-oriented text format that round-trips
// exactly (floats carry 17 significant digits).
// ---------------------------------------------------------------------------

/// 17-significant-digit rendering used in every text artifact; parses back
/// to the identical f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Model {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("format,hcr-model,1\n");
        out.push_str(&format!("variables,{}\n", self.config.variables.join(",")));
        out.push_str(&format!("order,{}\n", self.config.order));
        out.push_str(&format!("degree,{}\n", self.config.degree));
        out.push_str(&format!("dimension,{}\n", self.config.dimension()));
        out.push_str(&format!("normalizer_kind,{}\n", self.config.normalizer));
        match self.config.prune_sigmas {
            Some(s) => out.push_str(&format!("prune_sigmas,{}\n", fmt_f64(s))),
            None => out.push_str("prune_sigmas,none\n"),
        }
        out.push_str(&format!("samples,{}\n", self.coeffs.sample_size()));
        for (name, p) in self.config.variables.iter().zip(&self.normalizers) {
            out.push_str(&format!(
                "normalizer,{},{},{}\n",
                name,
                fmt_f64(p.location),
                fmt_f64(p.scale)
            ));
        }
        out.push_str(&format!("coefficients,{}\n", self.coeffs.len()));
        for (idx, value) in self.coeffs.entries() {
            let index_str = idx
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join("-");
            out.push_str(&format!("{},{}\n", index_str, fmt_f64(value)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Model> {
        let bad = |line: usize, what: &str| {
            HcrError::InvalidInput(format!("model file line {}: {what}", line + 1))
        };
        let mut lines = text.lines().enumerate();
        let mut expect = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| HcrError::InvalidInput(format!("model file ended before {key}")))?;
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.first().map(String::as_str) != Some(key) {
                return Err(bad(no, &format!("expected '{key}', found '{line}'")));
            }
            Ok((no, fields))
        };

        let (no, fields) = expect("format")?;
        if fields.len() != 3 || fields[1] != "hcr-model" || fields[2] != "1" {
            return Err(bad(no, "unsupported model format"));
        }
        let (no, fields) = expect("variables")?;
        let variables: Vec<String> = fields[1..].to_vec();
        if variables.is_empty() || variables.iter().any(String::is_empty) {
            return Err(bad(no, "empty variable list"));
        }
        let (no, fields) = expect("order")?;
        let order: usize = fields
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "bad order"))?;
        let (no, fields) = expect("degree")?;
        let degree: usize = fields
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "bad degree"))?;
        let (no, fields) = expect("dimension")?;
        let dimension: usize = fields
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "bad dimension"))?;
        if dimension != variables.len() * (order + 1) {
            return Err(bad(no, "dimension does not match variables × (order+1)"));
        }
        let (no, fields) = expect("normalizer_kind")?;
        let normalizer: NormalizerKind = fields
            .get(1)
            .ok_or_else(|| bad(no, "missing normalizer kind"))?
            .parse()?;
        let (no, fields) = expect("prune_sigmas")?;
        let prune_sigmas = match fields.get(1).map(String::as_str) {
            Some("none") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| bad(no, "bad prune threshold"))?,
            ),
            None => return Err(bad(no, "missing prune threshold")),
        };
        let (no, fields) = expect("samples")?;
        let samples: usize = fields
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "bad sample count"))?;

        let mut normalizers = Vec::with_capacity(variables.len());
        for name in &variables {
            let (no, fields) = expect("normalizer")?;
            if fields.len() != 4 || &fields[1] != name {
                return Err(bad(no, &format!("expected normalizer for '{name}'")));
            }
            let location: f64 = fields[2]
                .parse()
                .map_err(|_| bad(no, "bad normalizer location"))?;
            let scale: f64 = fields[3]
                .parse()
                .map_err(|_| bad(no, "bad normalizer scale"))?;
            normalizers.push(NormalizerParams::new(normalizer, location, scale)?);
        }

        let (no, fields) = expect("coefficients")?;
        let count: usize = fields
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "bad coefficient count"))?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, line) = lines
                .next()
                .ok_or_else(|| HcrError::InvalidInput("model file truncated".into()))?;
            let (index_str, value_str) = line
                .split_once(',')
                .ok_or_else(|| bad(no, "bad coefficient line"))?;
            let components: Vec<u32> = index_str
                .split('-')
                .map(|c| c.parse().map_err(|_| bad(no, "bad index component")))
                .collect::<Result<_>>()?;
            if components.len() != dimension {
                return Err(bad(no, "index arity does not match dimension"));
            }
            let value: f64 = value_str
                .parse()
                .map_err(|_| bad(no, "bad coefficient value"))?;
            entries.push((crate::basis::MultiIndex::new(components), value));
        }
        if let Some((no, line)) = lines.next() {
            if !line.trim().is_empty() {
                return Err(bad(no, "trailing content after coefficients"));
            }
        }

        let config = ModelConfig {
            variables,
            order,
            degree,
            normalizer,
            prune_sigmas,
        };
        config.validate()?;
        let coeffs = CoefficientTensor::from_entries(config.basis_spec()?, samples, entries)?;
        Ok(Model {
            config,
            normalizers,
            coeffs,
        })
    }
}
