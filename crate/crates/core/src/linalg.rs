//! Small dense linear algebra used by the collocation solvers.
//!
//! The Cholesky factorization here uses the same left-looking update order as
//! the incremental Newton-basis construction in [`crate::greedy`], so that a
//! dense solve on a greedily selected set reproduces the greedy factor.

use crate::error::{Error, Result};

/// Dense symmetric matrix stored row-major in full.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    /// Builds a matrix from row-major entries. Symmetry is checked with a
    /// relative tolerance of `1e-12 * max|a_ij|`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        let m = Self { n, data };
        let scale = m.max_abs();
        for i in 0..n {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Fills a symmetric matrix from a generator called for `j <= i` only.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

/// Lower-triangular matrix in packed row storage; row `i` holds `i + 1` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn new() -> Self {
        Self { n: 0, data: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { n: 0, data: Vec::with_capacity(n * (n + 1) / 2) }
    }

    /// Appends a row of length `dim() + 1` (the last entry is the diagonal).
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n + 1, "row length must equal the new dimension");
        self.data.extend_from_slice(row);
        self.n += 1;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Leading `m x m` block.
    pub fn leading(&self, m: usize) -> LowerTriangular {
        assert!(m <= self.n);
        Self { n: m, data: self.data[..m * (m + 1) / 2].to_vec() }
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let s = b[i] - dot(&row[..i], &y[..i]);
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `L^T x = y`.
    pub fn solve_upper_transposed(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n);
        let mut x = y.to_vec();
        for i in (0..self.n).rev() {
            let row = self.row(i);
            x[i] /= row[i];
            let xi = x[i];
            for (k, l) in row[..i].iter().enumerate() {
                x[k] -= l * xi;
            }
        }
        x
    }

    /// Solves `L L^T x = b` by two triangular solves.
    pub fn solve_normal(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper_transposed(&self.solve_lower(b))
    }
}

impl Default for LowerTriangular {
    fn default() -> Self {
        Self::new()
    }
}

/// Cholesky factorization without jitter. On failure returns the offending
/// pivot index and the reduced diagonal value.
pub fn cholesky(a: &SymMatrix) -> std::result::Result<LowerTriangular, (usize, f64)> {
    cholesky_with_shift(a, 0.0)
}

fn cholesky_with_shift(
    a: &SymMatrix,
    shift: f64,
) -> std::result::Result<LowerTriangular, (usize, f64)> {
    let n = a.dim();
    let mut l = LowerTriangular::with_capacity(n);
    // columns[j] holds L[i][j] for all i, so that the update of column i reads
    // previous columns in the same order as the greedy Newton basis.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut diag: Vec<f64> = (0..n).map(|i| a.get(i, i) + shift).collect();
    for j in 0..n {
        let d = diag[j];
        if !(d > 0.0) || !d.is_finite() {
            return Err((j, d));
        }
        let p = d.sqrt();
        let mut col = vec![0.0; n];
        col[j] = p;
        for (i, c) in col.iter_mut().enumerate().skip(j + 1) {
            let mut t = a.get(i, j);
            for prev in &columns {
                t -= prev[i] * prev[j];
            }
            *c = t / p;
        }
        for i in j + 1..n {
            diag[i] -= col[i] * col[i];
        }
        columns.push(col);
    }
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend(columns.iter().take(i + 1).map(|c| c[i]));
        l.push_row(&row);
    }
    Ok(l)
}

/// Relative jitter levels tried by [`cholesky_jittered`], scaled by the mean diagonal.
pub const JITTER_LEVELS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Cholesky with diagonal jitter escalation. Returns the factor and the
/// absolute jitter that was added.
pub fn cholesky_jittered(a: &SymMatrix) -> Result<(LowerTriangular, f64)> {
    let n = a.dim();
    if n == 0 {
        return Ok((LowerTriangular::new(), 0.0));
    }
    let mean_diag = a.trace() / n as f64;
    let mut last = (0, 0.0, 0.0);
    for rel in JITTER_LEVELS {
        let jitter = rel * mean_diag.abs();
        match cholesky_with_shift(a, jitter) {
            Ok(l) => return Ok((l, jitter)),
            Err((pivot, value)) => last = (pivot, value, jitter),
        }
    }
    Err(Error::IllConditioned { pivot: last.0, value: last.1, jitter: last.2 })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of a dominant-eigenpair computation.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix by power
/// iteration. Stops once the Rayleigh quotient changes by less than
/// `rel_tol` and the eigen-residual `|M v - theta v|` is below `rel_tol * theta`.
pub fn power_iteration(m: &SymMatrix, rel_tol: f64, max_iter: usize) -> Result<Eigenpair> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::Degenerate("empty matrix".into()));
    }
    // Start from the largest column, nudged off any invariant subspace.
    let start = (0..n)
        .max_by(|&a, &b| norm(m.row(a)).total_cmp(&norm(m.row(b))))
        .unwrap_or(0);
    let mut v: Vec<f64> = m.row(start).to_vec();
    let scale = norm(&v);
    if scale == 0.0 {
        return Err(Error::Degenerate("zero matrix has no dominant direction".into()));
    }
    let nudge = 1e-3 * scale / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x += nudge);
    normalize(&mut v);

    let mut theta = dot(&v, &m.mul_vec(&v));
    for it in 1..=max_iter {
        let mut w = m.mul_vec(&v);
        let wn = norm(&w);
        if wn == 0.0 {
            return Err(Error::Degenerate("power iteration collapsed to zero".into()));
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let mw = m.mul_vec(&w);
        let next = dot(&w, &mw);
        let resid = mw.iter().zip(&w).map(|(a, b)| (a - next * b).powi(2)).sum::<f64>().sqrt();
        let converged =
            (next - theta).abs() <= rel_tol * next.abs() && resid <= rel_tol * next.abs();
        v = w;
        theta = next;
        if converged {
            return Ok(Eigenpair { value: theta, vector: v, iterations: it });
        }
    }
    Ok(Eigenpair { value: theta, vector: v, iterations: max_iter })
}

pub(crate) fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
