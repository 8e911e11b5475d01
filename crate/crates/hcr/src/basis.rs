//! Orthonormal polynomial basis on the unit interval and its tensor products.
//!
//! The 1D family is the shifted Legendre polynomials rescaled to be
//! orthonormal under `∫_0^1 f_j f_k dx = δ_jk`:
//!
//! ```text
//! f_j(x) = sqrt(2j+1) · P_j(2x − 1)
//! ```
//!
//! where `P_j` follows the three-term recurrence
//! `(k+1) P_{k+1}(u) = (2k+1) u P_k(u) − k P_{k−1}(u)`. `f_0 ≡ 1` carries
//! normalization; every higher-degree function integrates to zero, so its
//! coefficient describes a perturbation from the uniform density.
//!
//! Multivariate basis functions are products `f_{j_1}(x_1) ··· f_{j_d}(x_d)`
//! addressed by a [`MultiIndex`]. Enumeration order is lexicographic with the
//! last coordinate varying fastest; coefficient files rely on this order
//! being stable.

use crate::error::{HcrError, Result};

/// Default cap on the number of basis functions `(m+1)^d` a spec may address.
pub const DEFAULT_INDEX_CAP: usize = 10_000_000;

/// Evaluate the orthonormal basis polynomial of the given degree at `x`.
///
/// Degrees are unbounded in principle; the recurrence stays well conditioned
/// on `[0,1]` because `|P_j| ≤ 1` there.
pub fn poly_1d(degree: usize, x: f64) -> f64 {
    let u = 2.0 * x - 1.0;
    let norm = ((2 * degree + 1) as f64).sqrt();
    match degree {
        0 => 1.0,
        1 => norm * u,
        _ => {
            let mut prev = 1.0;
            let mut cur = u;
            for k in 1..degree {
                let next =
                    ((2 * k + 1) as f64 * u * cur - k as f64 * prev) / (k + 1) as f64;
                prev = cur;
                cur = next;
            }
            norm * cur
        }
    }
}

/// Fill `out[j] = f_j(x)` for `j = 0..out.len()` with a single recurrence pass.
///
/// This is the hot path for estimation and evaluation; it avoids re-running
/// the recurrence per degree.
pub fn poly_1d_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    let u = 2.0 * x - 1.0;
    let mut prev = 1.0;
    let mut cur = u;
    out[1] = (3.0f64).sqrt() * u;
    for (j, slot) in out.iter_mut().enumerate().skip(2) {
        let k = j - 1;
        let next = ((2 * k + 1) as f64 * u * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
        *slot = ((2 * j + 1) as f64).sqrt() * cur;
    }
}

/// Identifier of one product basis function: one degree per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Self {
        MultiIndex(components)
    }

    /// The all-zeros index of the given dimension (the normalization term).
    pub fn zeros(dimension: usize) -> Self {
        MultiIndex(vec![0; dimension])
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&j| j == 0)
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(components: Vec<u32>) -> Self {
        MultiIndex(components)
    }
}

/// Evaluate the product basis function `f_{j_1}(x_1) ··· f_{j_d}(x_d)`.
///
/// The factors are multiplied left to right; estimation relies on this
/// grouping so that fast paths reproduce the naive product bit for bit.
pub fn product_eval(index: &MultiIndex, x: &[f64]) -> Result<f64> {
    if index.dimension() != x.len() {
        return Err(HcrError::InvalidInput(format!(
            "index has {} components but point has {} coordinates",
            index.dimension(),
            x.len()
        )));
    }
    let mut value = 1.0;
    for (&j, &xi) in index.components().iter().zip(x) {
        value *= poly_1d(j as usize, xi);
    }
    Ok(value)
}

/// Shape of a full product basis: dimension `d` and per-coordinate degree `m`.
///
/// Construction fails when `(m+1)^d` exceeds the cap, with a hint to use a
/// pruned (sparse) basis instead of silently exhausting memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    dimension: usize,
    degree: usize,
    size: usize,
}

impl BasisSpec {
    pub fn new(dimension: usize, degree: usize) -> Result<Self> {
        Self::with_cap(dimension, degree, DEFAULT_INDEX_CAP)
    }

    pub fn with_cap(dimension: usize, degree: usize, cap: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(HcrError::InvalidInput(
                "basis dimension must be at least 1".into(),
            ));
        }
        let size = (degree + 1)
            .checked_pow(u32::try_from(dimension).map_err(|_| {
                HcrError::ResourceLimit(format!("basis dimension {dimension} too large"))
            })?)
            .filter(|&s| s <= cap)
            .ok_or_else(|| {
                HcrError::ResourceLimit(format!(
                    "basis of dimension {dimension} and degree {degree} has more than \
                     {cap} functions; prune to a sparse basis or lower the degree"
                ))
            })?;
        Ok(BasisSpec {
            dimension,
            degree,
            size,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `(m+1)^d`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// All multi-indices in lexicographic order, starting at all-zeros.
    pub fn indices(&self) -> IndexIter {
        IndexIter {
            degree: self.degree as u32,
            next: Some(vec![0; self.dimension]),
        }
    }

    /// True if `index` belongs to this basis.
    pub fn contains(&self, index: &MultiIndex) -> bool {
        index.dimension() == self.dimension
            && index.components().iter().all(|&j| j as usize <= self.degree)
    }
}

/// Lexicographic multi-index stream (last coordinate varies fastest).
pub struct IndexIter {
    degree: u32,
    next: Option<Vec<u32>>,
}

impl Iterator for IndexIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                // Odometer rolled over: enumeration is complete.
                self.next = None;
                break;
            }
            pos -= 1;
            if succ[pos] < self.degree {
                succ[pos] += 1;
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(MultiIndex(current))
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
///
/// Nodes are found by Newton iteration on `P_n` with the usual Chebyshev
/// initial guess; exact for polynomials up to degree `2n − 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut u = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            // P_n(u) and P'_n(u) by the three-term recurrence.
            let mut prev = 1.0;
            let mut cur = u;
            for k in 1..n {
                let next = ((2 * k + 1) as f64 * u * cur - k as f64 * prev) / (k + 1) as f64;
                prev = cur;
                cur = next;
            }
            deriv = n as f64 * (u * cur - prev) / (u * u - 1.0);
            let delta = cur / deriv;
            u -= delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        // Map from [-1, 1] to [0, 1]; weights scale by the interval ratio.
        nodes[n - 1 - i] = 0.5 * (u + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - u * u) * deriv * deriv);
    }
    (nodes, weights)
}
