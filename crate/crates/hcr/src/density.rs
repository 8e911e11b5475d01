//! Polynomial density estimation and algebra on the unit hypercube.
//!
//! A density is stored as a [`CoefficientTensor`]: a sparse, lexicographically
//! sorted map from [`MultiIndex`] to coefficient. Estimation from a sample in
//! `[0,1]^d` is mean-square optimal and embarrassingly simple — each
//! coefficient is the sample average of its product basis function — so a
//! full-basis fit is a single pass over the data.
//!
//! Because every non-constant basis function integrates to zero,
//! marginalization is exact coefficient surgery (drop every entry with a
//! nonzero index on an integrated-out coordinate) and the integral of the
//! density over the cube equals the all-zeros coefficient.
//!
//! Estimated densities may go negative; that is a truncation artifact the
//! evaluation machinery reports rather than hides. Only region *mass*
//! computations clamp the density at zero.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{poly_1d_all, BasisSpec, MultiIndex};
use crate::error::{HcrError, Result};

/// How partial sums are combined during estimation.
///
/// `Sequential` (the reference mode) keeps one accumulator per index and adds
/// samples in order. `Pairwise` sums fixed-size sample blocks and merges them
/// in a balanced cascade; results differ from the reference by at most ~1e-12
/// per coefficient and the mode is worth switching on beyond ~10^6 samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummationMode {
    #[default]
    Sequential,
    Pairwise,
}

/// Options for [`CoefficientTensor::estimate_opts`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub summation: SummationMode,
    /// Number of worker threads; 1 is the deterministic reference. Parallel
    /// runs partition the sample into contiguous chunks and agree with the
    /// reference to 1e-10 per coefficient.
    pub threads: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            summation: SummationMode::Sequential,
            threads: 1,
        }
    }
}

/// A polynomial density: sparse coefficient storage over a product basis.
///
/// Immutable after construction; all the algebra below returns new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    spec: BasisSpec,
    sample_size: usize,
    /// Flattened multi-indices, `dimension` components per entry, sorted
    /// lexicographically.
    index_data: Vec<u32>,
    values: Vec<f64>,
}

/// Per-entry noise estimates for a tensor's coefficients.
#[derive(Debug, Clone)]
pub struct Sigmas {
    baseline: f64,
    values: Vec<f64>,
}

impl Sigmas {
    /// The uniform-density noise floor `1/sqrt(n)`.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// One sigma per tensor entry, aligned with entry order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One row of a ranked coefficient listing.
#[derive(Debug, Clone)]
pub struct RankedCoefficient {
    pub index: MultiIndex,
    pub value: f64,
    pub sigma: f64,
    /// `value / sigma`; infinite for the zero-variance normalization entry.
    pub z: f64,
}

/// Coefficients ranked by absolute value, normalization entry first.
#[derive(Debug, Clone)]
pub struct CoefficientReport {
    pub baseline_sigma: f64,
    pub rows: Vec<RankedCoefficient>,
}

/// How to integrate region statistics over the hypercube.
#[derive(Debug, Clone, Copy)]
pub enum RegionMethod {
    /// Riemann sum on a regular grid of cell centers; suited to d ≤ 3.
    Grid { resolution: usize },
    /// Uniform Monte Carlo; the only practical choice for d > 3.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Fractions of the hypercube (by volume and by positive mass) where the
/// density exceeds a threshold.
#[derive(Debug, Clone, Copy)]
pub struct RegionStats {
    pub volume_fraction: f64,
    pub mass_fraction: f64,
}

impl CoefficientTensor {
    /// Estimate a full-basis density from a sample in `[0,1]^d`.
    ///
    /// Deterministic reference mode: per-index accumulators filled in sample
    /// order; every coefficient is `mean_t f_j(x^t)` and the all-zeros
    /// coefficient is exactly 1.
    pub fn estimate(sample: ArrayView2<'_, f64>, spec: &BasisSpec) -> Result<Self> {
        Self::estimate_opts(sample, spec, &EstimateOptions::default())
    }

    pub fn estimate_opts(
        sample: ArrayView2<'_, f64>,
        spec: &BasisSpec,
        opts: &EstimateOptions,
    ) -> Result<Self> {
        let n = sample.nrows();
        if n == 0 {
            return Err(HcrError::InvalidInput("empty sample".into()));
        }
        if sample.ncols() != spec.dimension() {
            return Err(HcrError::InvalidInput(format!(
                "sample has {} columns, basis dimension is {}",
                sample.ncols(),
                spec.dimension()
            )));
        }
        if sample.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(HcrError::InvalidInput(
                "sample values must lie in [0, 1]".into(),
            ));
        }

        let size = spec.size();
        let mut acc = vec![0.0; size];
        let threads = opts.threads.clamp(1, n);
        if threads == 1 {
            accumulate_dense(sample, spec.degree(), false, opts.summation, &mut acc);
        } else {
            // Contiguous row chunks merged in chunk order: deterministic for
            // a fixed thread count.
            let chunk_rows = n.div_ceil(threads);
            let mut partials: Vec<Vec<f64>> = Vec::new();
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for c in 0..threads {
                    let lo = c * chunk_rows;
                    let hi = ((c + 1) * chunk_rows).min(n);
                    if lo >= hi {
                        break;
                    }
                    let view = sample.slice(ndarray::s![lo..hi, ..]);
                    let summation = opts.summation;
                    let degree = spec.degree();
                    handles.push(scope.spawn(move || {
                        let mut part = vec![0.0; size];
                        accumulate_dense(view, degree, false, summation, &mut part);
                        part
                    }));
                }
                for h in handles {
                    partials.push(h.join().expect("estimation worker panicked"));
                }
            });
            for part in &partials {
                for (a, p) in acc.iter_mut().zip(part) {
                    *a += p;
                }
            }
        }

        let values: Vec<f64> = acc.into_iter().map(|s| s / n as f64).collect();
        Ok(CoefficientTensor {
            spec: *spec,
            sample_size: n,
            index_data: dense_index_data(spec),
            values,
        })
    }

    /// Build a tensor from explicit entries (synthetic densities, file loads).
    pub fn from_entries(
        spec: BasisSpec,
        sample_size: usize,
        entries: Vec<(MultiIndex, f64)>,
    ) -> Result<Self> {
        let mut entries = entries;
        for (index, value) in &entries {
            if !spec.contains(index) {
                return Err(HcrError::InvalidInput(format!(
                    "index {:?} outside basis (d={}, m={})",
                    index.components(),
                    spec.dimension(),
                    spec.degree()
                )));
            }
            if !value.is_finite() {
                return Err(HcrError::InvalidInput("non-finite coefficient".into()));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(HcrError::InvalidInput(format!(
                    "duplicate index {:?}",
                    pair[0].0.components()
                )));
            }
        }
        let mut index_data = Vec::with_capacity(entries.len() * spec.dimension());
        let mut values = Vec::with_capacity(entries.len());
        for (index, value) in entries {
            index_data.extend_from_slice(index.components());
            values.push(value);
        }
        Ok(CoefficientTensor {
            spec,
            sample_size,
            index_data,
            values,
        })
    }

    /// The uniform density on `[0,1]^d`: a single normalization entry.
    pub fn uniform(dimension: usize) -> Self {
        let spec = BasisSpec::new(dimension, 0).expect("degree-0 basis always fits");
        CoefficientTensor {
            spec,
            sample_size: 0,
            index_data: vec![0; dimension],
            values: vec![1.0],
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Sample size the coefficients were estimated from (0 for synthetic).
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every index of the basis is stored.
    pub fn is_dense(&self) -> bool {
        self.values.len() == self.spec.size()
    }

    /// Entries in lexicographic index order.
    pub fn entries(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.index_data
            .chunks_exact(self.spec.dimension())
            .zip(self.values.iter().copied())
    }

    /// Coefficient for one index, if stored.
    pub fn get(&self, index: &MultiIndex) -> Option<f64> {
        let d = self.spec.dimension();
        if index.dimension() != d {
            return None;
        }
        let target = index.components();
        let mut lo = 0usize;
        let mut hi = self.values.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.index_data[mid * d..(mid + 1) * d].cmp(target) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(self.values[mid]),
            }
        }
        None
    }

    /// Evaluate the polynomial at one point. Negative values are legitimate
    /// output (series-truncation artifact), not an error.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.spec.dimension() {
            return Err(HcrError::InvalidInput(format!(
                "point has {} coordinates, density has {}",
                x.len(),
                self.spec.dimension()
            )));
        }
        let mut ev = Evaluator::new(self);
        Ok(ev.eval(x))
    }

    /// Evaluate at every row of `points`.
    pub fn evaluate_many(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.spec.dimension() {
            return Err(HcrError::InvalidInput(format!(
                "points have {} coordinates, density has {}",
                points.ncols(),
                self.spec.dimension()
            )));
        }
        let mut ev = Evaluator::new(self);
        let mut x = vec![0.0; points.ncols()];
        Ok(points
            .rows()
            .into_iter()
            .map(|row| {
                for (xi, v) in x.iter_mut().zip(row.iter()) {
                    *xi = *v;
                }
                ev.eval(&x)
            })
            .collect())
    }

    /// Noise estimate per coefficient: the empirical standard deviation of
    /// the basis function over the estimation sample, divided by `sqrt(n)`.
    /// The uniform-density baseline `1/sqrt(n)` is reported alongside.
    pub fn sigmas(&self, sample: ArrayView2<'_, f64>) -> Result<Sigmas> {
        let n = sample.nrows();
        if n < 2 {
            return Err(HcrError::InvalidInput(
                "sigma estimation needs at least 2 samples".into(),
            ));
        }
        if n != self.sample_size || sample.ncols() != self.spec.dimension() {
            return Err(HcrError::InvalidInput(format!(
                "sigma expects the estimation sample ({} x {}), got {} x {}",
                self.sample_size,
                self.spec.dimension(),
                n,
                sample.ncols()
            )));
        }
        let mut sumsq = vec![0.0; self.values.len()];
        if self.is_dense() {
            accumulate_dense(
                sample,
                self.spec.degree(),
                true,
                SummationMode::Sequential,
                &mut sumsq,
            );
        } else {
            accumulate_sparse(
                sample,
                self.spec.degree(),
                self.spec.dimension(),
                &self.index_data,
                true,
                &mut sumsq,
            );
        }
        let nf = n as f64;
        let values = sumsq
            .iter()
            .zip(&self.values)
            .map(|(&sq, &mean)| ((sq / nf - mean * mean).max(0.0)).sqrt() / nf.sqrt())
            .collect();
        Ok(Sigmas {
            baseline: 1.0 / nf.sqrt(),
            values,
        })
    }

    /// Rank coefficients by |value|, normalization entry pinned first.
    pub fn top_k(&self, sample: ArrayView2<'_, f64>, k: usize) -> Result<CoefficientReport> {
        if k == 0 {
            return Err(HcrError::InvalidInput("top-k needs k >= 1".into()));
        }
        let sigmas = self.sigmas(sample)?;
        let d = self.spec.dimension();
        let zero_pos = self
            .entries()
            .position(|(idx, _)| idx.iter().all(|&j| j == 0))
            .ok_or_else(|| {
                HcrError::InvalidInput("tensor is missing the normalization entry".into())
            })?;

        let mut order: Vec<usize> = (0..self.values.len()).filter(|&i| i != zero_pos).collect();
        order.sort_by(|&a, &b| {
            self.values[b].abs().total_cmp(&self.values[a].abs()).then_with(|| {
                self.index_data[a * d..(a + 1) * d].cmp(&self.index_data[b * d..(b + 1) * d])
            })
        });
        order.truncate(k);

        let make_row = |i: usize| {
            let sigma = sigmas.values[i];
            RankedCoefficient {
                index: MultiIndex::new(self.index_data[i * d..(i + 1) * d].to_vec()),
                value: self.values[i],
                sigma,
                z: self.values[i] / sigma,
            }
        };
        let mut rows = Vec::with_capacity(order.len() + 1);
        rows.push(make_row(zero_pos));
        rows.extend(order.into_iter().map(make_row));
        Ok(CoefficientReport {
            baseline_sigma: sigmas.baseline,
            rows,
        })
    }

    /// Integrate out every coordinate not in `keep` (strictly increasing).
    ///
    /// Exact: a product term survives integration iff its index is zero on
    /// every dropped coordinate, because `∫ f_j = 0` for `j ≥ 1`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<CoefficientTensor> {
        let d = self.spec.dimension();
        if keep.is_empty() {
            return Err(HcrError::InvalidInput(
                "marginalization must keep at least one coordinate".into(),
            ));
        }
        if keep.iter().any(|&c| c >= d) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HcrError::InvalidInput(format!(
                "keep set {keep:?} is not a strictly increasing subset of 0..{d}"
            )));
        }
        let mut index_data = Vec::new();
        let mut values = Vec::new();
        'entry: for (idx, value) in self.entries() {
            let mut pos = 0;
            for (coord, &j) in idx.iter().enumerate() {
                if pos < keep.len() && keep[pos] == coord {
                    pos += 1;
                } else if j != 0 {
                    continue 'entry;
                }
            }
            for &coord in keep {
                index_data.push(idx[coord]);
            }
            values.push(value);
        }
        Ok(CoefficientTensor {
            spec: BasisSpec::new(keep.len(), self.spec.degree())?,
            sample_size: self.sample_size,
            index_data,
            values,
        })
    }

    /// Fix the context coordinates at the given values and collapse the
    /// density onto the remaining coordinates.
    ///
    /// With `renormalize` the slice is divided by the context marginal
    /// density so it integrates to one; a non-positive marginal is an error
    /// and the caller may fall back to the unnormalized slice.
    pub fn condition_slice(
        &self,
        ctx_coords: &[usize],
        ctx_values: &[f64],
        renormalize: bool,
    ) -> Result<CoefficientTensor> {
        let d = self.spec.dimension();
        if ctx_coords.len() != ctx_values.len() {
            return Err(HcrError::InvalidInput(format!(
                "{} context coordinates but {} values",
                ctx_coords.len(),
                ctx_values.len()
            )));
        }
        if ctx_coords.iter().any(|&c| c >= d) || ctx_coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HcrError::InvalidInput(format!(
                "context coordinates {ctx_coords:?} are not a strictly increasing subset of 0..{d}"
            )));
        }
        if ctx_values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(HcrError::InvalidInput(
                "context values must lie in [0, 1]".into(),
            ));
        }
        if ctx_coords.is_empty() {
            return Ok(self.clone());
        }
        if ctx_coords.len() == d {
            return Err(HcrError::InvalidInput(
                "conditioning on every coordinate leaves no free coordinate".into(),
            ));
        }

        // Basis values of each context coordinate at its conditioning point.
        let mp1 = self.spec.degree() + 1;
        let mut ctx_basis = vec![0.0; ctx_coords.len() * mp1];
        for (slot, &v) in ctx_values.iter().enumerate() {
            poly_1d_all(v, &mut ctx_basis[slot * mp1..(slot + 1) * mp1]);
        }
        let ctx_slot: Vec<Option<usize>> = {
            let mut map = vec![None; d];
            for (slot, &c) in ctx_coords.iter().enumerate() {
                map[c] = Some(slot);
            }
            map
        };

        let rest_dim = d - ctx_coords.len();
        let mut collapsed: std::collections::BTreeMap<Vec<u32>, f64> =
            std::collections::BTreeMap::new();
        for (idx, value) in self.entries() {
            let mut weight = value;
            let mut rest = Vec::with_capacity(rest_dim);
            for (coord, &j) in idx.iter().enumerate() {
                match ctx_slot[coord] {
                    Some(slot) => weight *= ctx_basis[slot * mp1 + j as usize],
                    None => rest.push(j),
                }
            }
            *collapsed.entry(rest).or_insert(0.0) += weight;
        }

        let norm = if renormalize {
            let norm = collapsed.get(&vec![0u32; rest_dim]).copied().unwrap_or(0.0);
            if norm <= 0.0 {
                return Err(HcrError::NonPositiveContextDensity(norm));
            }
            norm
        } else {
            1.0
        };

        let mut index_data = Vec::with_capacity(collapsed.len() * rest_dim);
        let mut values = Vec::with_capacity(collapsed.len());
        for (rest, weight) in collapsed {
            index_data.extend_from_slice(&rest);
            values.push(weight / norm);
        }
        Ok(CoefficientTensor {
            spec: BasisSpec::new(rest_dim, self.spec.degree())?,
            sample_size: self.sample_size,
            index_data,
            values,
        })
    }

    /// Keep only coefficients at least `threshold` sigmas out of the noise.
    /// The normalization entry always survives.
    pub fn prune(&self, sample: ArrayView2<'_, f64>, threshold: f64) -> Result<CoefficientTensor> {
        if threshold < 0.0 || threshold.is_nan() {
            return Err(HcrError::InvalidInput(format!(
                "prune threshold must be non-negative, got {threshold}"
            )));
        }
        let sigmas = self.sigmas(sample)?;
        let mut index_data = Vec::new();
        let mut values = Vec::new();
        for (i, (idx, value)) in self.entries().enumerate() {
            let keep = idx.iter().all(|&j| j == 0) || value.abs() >= threshold * sigmas.values[i];
            if keep {
                index_data.extend_from_slice(idx);
                values.push(value);
            }
        }
        Ok(CoefficientTensor {
            spec: self.spec,
            sample_size: self.sample_size,
            index_data,
            values,
        })
    }

    /// Volume and positive-mass fractions of the region where the density
    /// exceeds `threshold`.
    pub fn region_stats(&self, threshold: f64, method: &RegionMethod) -> Result<RegionStats> {
        let d = self.spec.dimension();
        let mut ev = Evaluator::new(self);
        let mut count_above = 0usize;
        let mut total = 0usize;
        let mut mass_above = 0.0;
        let mut mass_total = 0.0;
        let mut tally = |rho: f64| {
            total += 1;
            let positive = rho.max(0.0);
            mass_total += positive;
            if rho > threshold {
                count_above += 1;
                mass_above += positive;
            }
        };
        match *method {
            RegionMethod::Grid { resolution } => {
                if resolution < 2 {
                    return Err(HcrError::InvalidInput(format!(
                        "grid resolution must be at least 2, got {resolution}"
                    )));
                }
                let cells = resolution
                    .checked_pow(u32::try_from(d).unwrap_or(u32::MAX))
                    .filter(|&c| c <= 100_000_000)
                    .ok_or_else(|| {
                        HcrError::ResourceLimit(format!(
                            "grid of resolution {resolution} in dimension {d} is too large; \
                             use Monte Carlo sampling"
                        ))
                    })?;
                let mut cell = vec![0usize; d];
                let mut x = vec![0.0; d];
                for _ in 0..cells {
                    for (xi, &c) in x.iter_mut().zip(&cell) {
                        *xi = (c as f64 + 0.5) / resolution as f64;
                    }
                    tally(ev.eval(&x));
                    for pos in (0..d).rev() {
                        cell[pos] += 1;
                        if cell[pos] < resolution {
                            break;
                        }
                        cell[pos] = 0;
                    }
                }
            }
            RegionMethod::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(HcrError::InvalidInput(
                        "Monte Carlo needs at least one sample".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut x = vec![0.0; d];
                for _ in 0..samples {
                    for xi in x.iter_mut() {
                        *xi = rng.random::<f64>();
                    }
                    tally(ev.eval(&x));
                }
            }
        }
        Ok(RegionStats {
            volume_fraction: count_above as f64 / total as f64,
            mass_fraction: if mass_total > 0.0 {
                mass_above / mass_total
            } else {
                0.0
            },
        })
    }
}

/// Flattened lexicographic enumeration of a full basis.
fn dense_index_data(spec: &BasisSpec) -> Vec<u32> {
    let d = spec.dimension();
    let m = spec.degree() as u32;
    let mut data = Vec::with_capacity(spec.size() * d);
    let mut idx = vec![0u32; d];
    loop {
        data.extend_from_slice(&idx);
        let mut pos = d;
        loop {
            if pos == 0 {
                return data;
            }
            pos -= 1;
            if idx[pos] < m {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Accumulate `Σ_rows f_j(x)` (or `f_j(x)²`) for every full-basis index.
///
/// The rank-1 structure of each sample's product table lets the whole basis
/// be expanded with roughly one multiply per coefficient: prefix products
/// are built level by level and the last coordinate is fused into the
/// accumulator. The multiplication grouping is left to right, matching
/// [`crate::basis::product_eval`] bit for bit.
fn accumulate_dense(
    sample: ArrayView2<'_, f64>,
    degree: usize,
    square: bool,
    summation: SummationMode,
    acc: &mut [f64],
) {
    match summation {
        SummationMode::Sequential => accumulate_dense_run(sample, degree, square, acc),
        SummationMode::Pairwise => {
            // Balanced cascade over fixed-size blocks: a binary counter of
            // partial sums, each level holding one buffer of basis size.
            const BLOCK: usize = 1024;
            let n = sample.nrows();
            let mut stack: Vec<(u32, Vec<f64>)> = Vec::new();
            let mut start = 0;
            while start < n {
                let end = (start + BLOCK).min(n);
                let mut partial = vec![0.0; acc.len()];
                accumulate_dense_run(
                    sample.slice(ndarray::s![start..end, ..]),
                    degree,
                    square,
                    &mut partial,
                );
                let mut level = 0u32;
                while stack.last().is_some_and(|(l, _)| *l == level) {
                    let (_, top) = stack.pop().expect("stack checked non-empty");
                    for (p, t) in partial.iter_mut().zip(&top) {
                        *p += t;
                    }
                    level += 1;
                }
                stack.push((level, partial));
                start = end;
            }
            while let Some((_, top)) = stack.pop() {
                for (a, t) in acc.iter_mut().zip(&top) {
                    *a += t;
                }
            }
        }
    }
}

fn accumulate_dense_run(
    sample: ArrayView2<'_, f64>,
    degree: usize,
    square: bool,
    acc: &mut [f64],
) {
    let d = sample.ncols();
    let mp1 = degree + 1;
    let mut table = vec![0.0; d * mp1];
    let prefix_len = acc.len() / mp1;
    let mut cur = vec![0.0; prefix_len.max(1)];
    let mut nxt = vec![0.0; prefix_len.max(1)];
    for row in sample.rows() {
        for (i, &x) in row.iter().enumerate() {
            poly_1d_all(x, &mut table[i * mp1..(i + 1) * mp1]);
        }
        if square {
            for v in table.iter_mut() {
                *v *= *v;
            }
        }
        if d == 1 {
            for (a, t) in acc.iter_mut().zip(&table) {
                *a += t;
            }
            continue;
        }
        cur[..mp1].copy_from_slice(&table[..mp1]);
        let mut width = mp1;
        for coord in 1..d - 1 {
            let trow = &table[coord * mp1..(coord + 1) * mp1];
            for p in 0..width {
                let f = cur[p];
                let out = &mut nxt[p * mp1..(p + 1) * mp1];
                for (o, t) in out.iter_mut().zip(trow) {
                    *o = f * t;
                }
            }
            std::mem::swap(&mut cur, &mut nxt);
            width *= mp1;
        }
        let trow = &table[(d - 1) * mp1..d * mp1];
        for p in 0..width {
            let f = cur[p];
            let out = &mut acc[p * mp1..(p + 1) * mp1];
            for (o, t) in out.iter_mut().zip(trow) {
                *o += f * t;
            }
        }
    }
}

/// Sparse counterpart of [`accumulate_dense`]: per-entry sums for an
/// arbitrary sorted index list, sharing prefix products between entries.
fn accumulate_sparse(
    sample: ArrayView2<'_, f64>,
    degree: usize,
    dimension: usize,
    index_data: &[u32],
    square: bool,
    acc: &mut [f64],
) {
    let mp1 = degree + 1;
    let mut table = vec![0.0; dimension * mp1];
    let mut prods = vec![1.0; dimension + 1];
    for row in sample.rows() {
        for (i, &x) in row.iter().enumerate() {
            poly_1d_all(x, &mut table[i * mp1..(i + 1) * mp1]);
        }
        if square {
            for v in table.iter_mut() {
                *v *= *v;
            }
        }
        let mut prev: Option<&[u32]> = None;
        for (e, idx) in index_data.chunks_exact(dimension).enumerate() {
            let start = prev.map_or(0, |p| {
                p.iter()
                    .zip(idx)
                    .position(|(a, b)| a != b)
                    .unwrap_or(dimension)
            });
            for k in start..dimension {
                prods[k + 1] = prods[k] * table[k * mp1 + idx[k] as usize];
            }
            acc[e] += prods[dimension];
            prev = Some(idx);
        }
    }
}

/// Reusable evaluation state: basis table plus contraction scratch.
pub(crate) struct Evaluator<'t> {
    tensor: &'t CoefficientTensor,
    table: Vec<f64>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
    prods: Vec<f64>,
}

impl<'t> Evaluator<'t> {
    pub(crate) fn new(tensor: &'t CoefficientTensor) -> Self {
        let d = tensor.spec.dimension();
        let mp1 = tensor.spec.degree() + 1;
        let scratch = if tensor.is_dense() && d > 1 {
            tensor.spec.size() / mp1
        } else {
            0
        };
        Evaluator {
            tensor,
            table: vec![0.0; d * mp1],
            buf_a: vec![0.0; scratch],
            buf_b: vec![0.0; scratch / mp1.max(1)],
            prods: vec![1.0; d + 1],
        }
    }

    /// Density value at `x`; the caller guarantees the arity.
    pub(crate) fn eval(&mut self, x: &[f64]) -> f64 {
        let d = self.tensor.spec.dimension();
        let mp1 = self.tensor.spec.degree() + 1;
        debug_assert_eq!(x.len(), d);
        for (i, &xi) in x.iter().enumerate() {
            poly_1d_all(xi, &mut self.table[i * mp1..(i + 1) * mp1]);
        }
        if self.tensor.is_dense() {
            self.eval_dense(d, mp1)
        } else {
            self.eval_sparse(d, mp1)
        }
    }

    /// Dense path: contract the coefficient hyper-cube one axis at a time,
    /// last axis first — about one multiply-add per stored coefficient.
    fn eval_dense(&mut self, d: usize, mp1: usize) -> f64 {
        fn dot(coeffs: &[f64], trow: &[f64]) -> f64 {
            coeffs.iter().zip(trow).map(|(c, t)| c * t).sum()
        }
        if d == 1 {
            return dot(&self.tensor.values, &self.table[..mp1]);
        }
        let mut width = self.tensor.values.len() / mp1;
        let trow = &self.table[(d - 1) * mp1..d * mp1];
        for p in 0..width {
            self.buf_a[p] = dot(&self.tensor.values[p * mp1..(p + 1) * mp1], trow);
        }
        for axis in (1..d - 1).rev() {
            let trow = &self.table[axis * mp1..(axis + 1) * mp1];
            width /= mp1;
            for p in 0..width {
                self.buf_b[p] = dot(&self.buf_a[p * mp1..(p + 1) * mp1], trow);
            }
            std::mem::swap(&mut self.buf_a, &mut self.buf_b);
        }
        dot(&self.buf_a[..mp1], &self.table[..mp1])
    }

    /// Sparse path: walk sorted entries, reusing shared-prefix products
    /// between consecutive indices.
    #[allow(clippy::needless_range_loop)] // prods[k] feeds prods[k+1]
    fn eval_sparse(&mut self, d: usize, mp1: usize) -> f64 {
        let mut total = 0.0;
        let mut prev: Option<&[u32]> = None;
        for (idx, value) in self
            .tensor
            .index_data
            .chunks_exact(d)
            .zip(self.tensor.values.iter())
        {
            let start = prev.map_or(0, |p| {
                p.iter().zip(idx).position(|(a, b)| a != b).unwrap_or(d)
            });
            for k in start..d {
                self.prods[k + 1] = self.prods[k] * self.table[k * mp1 + idx[k] as usize];
            }
            total += value * self.prods[d];
            prev = Some(idx);
        }
        total
    }
}
