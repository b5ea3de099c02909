//! Sparse storage, banded Cholesky and a few dense helpers.
//!
//! Matrices coming out of the structured meshes have a small bandwidth
//! (`n + 2` for an `n × n` square, 1 for the interval), so a banded
//! Cholesky factorization is both simple and fast enough at desk scale.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|a| (a.0, a.1));

        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, std::iter::empty())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &d)| (i, i, d)))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * xi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &SparseMatrix, factor: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .chain(other.triplets().map(|(i, j, v)| (i, j, factor * v))),
        )
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Writes the matrix in MatrixMarket coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw ..= i], left padded
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "Cholesky needs a square matrix");
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, j, v) in a.triplets() {
            if j <= i {
                band[i * w + bw + j - i] += v;
            }
        }
        for j in 0..n {
            let lo_j = j.saturating_sub(bw);
            let mut d = band[j * w + bw];
            for k in lo_j..j {
                let l = band[j * w + bw + k - j];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            band[j * w + bw] = d;
            for i in j + 1..=(j + bw).min(n.saturating_sub(1)) {
                let lo = i.saturating_sub(bw).max(lo_j);
                let mut s = band[i * w + bw + j - i];
                for k in lo..j {
                    s -= band[i * w + bw + k - i] * band[j * w + bw + k - j];
                }
                band[i * w + bw + j - i] = s / d;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + bw + k - i] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..=(i + bw).min(n - 1) {
                s -= self.band[k * w + bw + i - k] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
    }
}

/// Factorization of a (possibly nonsymmetric) Jacobian.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(BandCholesky),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factorization {
    pub fn cholesky(a: &SparseMatrix) -> Result<Self> {
        Ok(Self::Cholesky(BandCholesky::factor(a)?))
    }

    pub fn lu(a: &SparseMatrix) -> Result<Self> {
        let lu = a.to_dense().lu();
        let u = lu.u();
        let diag_max = u.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diag_min = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(diag_min > diag_max * 1e-14) {
            return Err(Error::SingularJacobian);
        }
        Ok(Self::Lu(lu))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Self::Cholesky(c) => c.solve(b),
            Self::Lu(lu) => lu
                .solve(&DVector::from_column_slice(b))
                .expect("nonsingular LU")
                .as_slice()
                .to_vec(),
        }
    }
}

/// All eigenvalues (ascending) of the symmetric pencil `A v = λ B v`, `B` SPD.
pub fn generalized_eigenvalues(a: &SparseMatrix, b: &SparseMatrix) -> Result<Vec<f64>> {
    let chol = b.to_dense().cholesky().ok_or(Error::EigSolveFailure)?;
    let l = chol.l();
    let a = a.to_dense();
    let a = (&a + a.transpose()) * 0.5;
    let y = l
        .solve_lower_triangular(&a)
        .ok_or(Error::EigSolveFailure)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::EigSolveFailure)?;
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigSolveFailure);
    }
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest eigenvalue of `A v = λ B v` (both SPD) by inverse iteration.
pub fn smallest_generalized_eigenvalue(a: &SparseMatrix, b: &SparseMatrix) -> Result<f64> {
    let fac = BandCholesky::factor(a).map_err(|_| Error::EigSolveFailure)?;
    let n = a.nrows();
    let mut x = vec![1.0; n];
    let mut lambda = f64::INFINITY;
    let mut stable = 0;
    for _ in 0..20_000 {
        let bx = b.matvec(&x);
        let y = fac.solve(&bx);
        let by = b.matvec(&y);
        let ay = a.matvec(&y);
        let next = dot(&y, &ay) / dot(&y, &by);
        let scale = dot(&y, &by).sqrt();
        x = y.into_iter().map(|v| v / scale).collect();
        if !next.is_finite() {
            return Err(Error::EigSolveFailure);
        }
        if (lambda - next).abs() <= 1e-15 * next.abs() {
            stable += 1;
            if stable >= 3 {
                return Ok(next);
            }
        } else {
            stable = 0;
        }
        lambda = next;
    }
    Err(Error::EigSolveFailure)
}

/// Largest eigenvalue of `A v = λ B v` by power iteration on `B⁻¹ A`.
///
/// Returns a lower estimate whose relative change has dropped below `tol`.
pub fn power_iteration(a: &SparseMatrix, b: &BandCholesky, tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    // deterministic, generic start vector
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let ax = a.matvec(&x);
        let y = b.solve(&ax);
        let ay = a.matvec(&y);
        // Rayleigh quotient with respect to the B-inner product
        let num = dot(&y, &ay);
        let den = dot(&y, &ax);
        if den <= 0.0 {
            return 0.0;
        }
        let next = num / den;
        let nrm = den.sqrt();
        x = y.into_iter().map(|v| v / nrm).collect();
        if (next - lambda).abs() <= tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
