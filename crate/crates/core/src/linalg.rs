//! Small dense linear algebra for the adaptation phases.
//!
//! Both phases decompose the scatter matrix of a handful of centered rows
//! living in a D-dimensional space. The D×D matrix is never formed: the
//! eigenpairs come from the R×R Gram matrix and are mapped back through the
//! rows. Eigenvalues of symmetric matrices are computed with cyclic Jacobi
//! rotations, which is unconditionally robust at these sizes.

use crate::error::{Error, Result};

/// Default relative rank tolerance for [`scatter_eigen`].
pub const DEFAULT_EIG_TOL: f64 = 1e-12;

/// Keeps `tol * (trace + TRACE_FLOOR)` meaningful when the trace is zero.
const TRACE_FLOOR: f64 = 1e-300;

const MAX_SWEEPS: usize = 64;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub(crate) fn ensure_finite(a: &[f64], what: &str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("{what} contains non-finite entries")))
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, got: data.len() });
        }
        ensure_finite(&data, "matrix")?;
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }
}

/// Eigenpairs sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// Unit eigenvectors, `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    /// Trace of the decomposed matrix, including any discarded eigenvalues.
    pub trace: f64,
}

impl EigenSystem {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest deviation from orthonormality over all pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, vi) in self.vectors.iter().enumerate() {
            worst = worst.max((norm(vi) - 1.0).abs());
            for vj in &self.vectors[i + 1..] {
                worst = worst.max(dot(vi, vj).abs());
            }
        }
        worst
    }
}

/// Arithmetic mean of `rows`. Equal rows give that row back bit for bit.
pub fn row_mean<'a, I>(rows: I, cols: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: Clone,
{
    let rows = rows.into_iter();
    let mut it = rows.clone();
    let Some(first) = it.next() else { return vec![0.0; cols] };
    if it.all(|r| r == first) {
        return first.to_vec();
    }
    let mut mean = vec![0.0; cols];
    let mut n = 0usize;
    for row in rows {
        axpy(1.0, row, &mut mean);
        n += 1;
    }
    scale(1.0 / n as f64, &mut mean);
    mean
}

/// Column means and the mean-removed rows.
pub fn center_rows(x: &RowMatrix) -> Result<(Vec<f64>, RowMatrix)> {
    ensure_finite(&x.data, "matrix")?;
    let mean = row_mean(x.data.chunks_exact(x.cols), x.cols);
    let mut centered = x.clone();
    for row in centered.data.chunks_exact_mut(x.cols) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok((mean, centered))
}

/// Eigenpairs of `(1/denom) · centeredᵀ · centered` via the row Gram matrix.
///
/// Only eigenvalues above `tol · (trace + 1e-300)` are kept. With R rows the
/// scatter has rank at most R − 1 once the rows are centered, so `rank()` is
/// usually far below the column count.
pub fn scatter_eigen(centered: &RowMatrix, denom: usize, tol: f64) -> Result<EigenSystem> {
    if denom == 0 {
        return Err(Error::InvalidData("scatter denominator must be >= 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidData(format!("rank tolerance must be >= 0, got {tol}")));
    }
    ensure_finite(&centered.data, "centered matrix")?;
    let r = centered.rows;
    let inv = 1.0 / denom as f64;
    let mut gram = vec![0.0; r * r];
    for i in 0..r {
        for j in i..r {
            let g = dot(centered.row(i), centered.row(j)) * inv;
            gram[i * r + j] = g;
            gram[j * r + i] = g;
        }
    }
    let trace: f64 = (0..r).map(|i| gram[i * r + i]).sum();
    let (vals, vecs) = jacobi(r, gram)?;

    let threshold = tol * (trace + TRACE_FLOOR);
    let mut order: Vec<usize> = (0..r).filter(|&k| vals[k] > threshold).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));

    let mut values = Vec::with_capacity(order.len());
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    for k in order {
        // u = Xᵀ v, normalized; ‖Xᵀ v‖² = denom · λ in exact arithmetic.
        let mut u = vec![0.0; centered.cols];
        for i in 0..r {
            axpy(vecs[i * r + k], centered.row(i), &mut u);
        }
        let expected = (denom as f64 * vals[k]).sqrt();
        for prev in &vectors {
            let p = dot(&u, prev);
            axpy(-p, prev, &mut u);
        }
        let n = norm(&u);
        // Mapped vector collapsed into the already-spanned subspace: the
        // eigenvalue was rounding noise.
        if !(n > 1e-6 * expected) {
            continue;
        }
        scale(1.0 / n, &mut u);
        values.push(vals[k]);
        vectors.push(u);
    }

    let eig = EigenSystem { values, vectors, trace };
    debug_assert!(eig.orthonormality_error() <= 1e-8, "orthonormality {}", eig.orthonormality_error());
    Ok(eig)
}

/// Full eigendecomposition of a small symmetric matrix by cyclic Jacobi.
pub fn sym_eigen_dense(s: &RowMatrix) -> Result<EigenSystem> {
    let n = s.rows;
    if s.cols != n {
        return Err(Error::Dimension { expected: n, got: s.cols });
    }
    let mut asym = 0.0_f64;
    let mut maxabs = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((s.get(i, j) - s.get(j, i)).abs());
            maxabs = maxabs.max(s.get(i, j).abs());
        }
    }
    if asym > 1e-10 * (1.0 + maxabs) {
        return Err(Error::Asymmetric(asym));
    }
    let trace = (0..n).map(|i| s.get(i, i)).sum();
    let (vals, vecs) = jacobi(n, s.data.clone())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let values = order.iter().map(|&k| vals[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| vecs[i * n + k]).collect())
        .collect();
    Ok(EigenSystem { values, vectors, trace })
}

/// Cyclic Jacobi on a row-major symmetric `n×n` matrix.
///
/// Returns unsorted eigenvalues and the row-major matrix whose columns are
/// the matching eigenvectors.
fn jacobi(n: usize, mut a: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = RowMatrix::identity(n).data;
    let fro = norm(&a);
    if fro == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    // Rotations below this size cannot move any eigenvalue by more than
    // about one ulp of the matrix norm.
    let skip = f64::EPSILON * fro / n as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                rotated = true;
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
        if !rotated {
            let vals = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((vals, v));
        }
    }
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| a[i * n + j] * a[i * n + j])
        .sum::<f64>()
        .sqrt();
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS, off })
}
