//! Dense real linear algebra for the small matrices used throughout the
//! toolkit (state dimensions of a dozen or so).
//!
//! Symmetric eigenproblems use cyclic Jacobi rotations, the matrix
//! exponential uses a degree-6 Padé approximant with scaling and squaring,
//! and general (nonsymmetric) eigenvalues come from a Hessenberg reduction
//! followed by shifted QR.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};

/// Absolute tolerance on `max |A - Aᵀ|` for operations that require symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix { rows: m.rows, cols: m.cols, data: m.data }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>13.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return dim_err(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input, so it
    /// is meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix { rows: values.len(), cols: 1, data: values.to_vec() }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced ∞-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= tol
    }

    /// Returns `(A + Aᵀ)/2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn try_mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn try_add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return dim_err(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return dim_err(format!("{}x{} matrix times vector of length {}", self.rows, self.cols, x.len()));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(x, &self.mul_vec(x)?))
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Assembles a block matrix. Every row of blocks must share a height and
    /// every column of blocks a width.
    pub fn block(blocks: &[&[&Matrix]]) -> Result<Matrix> {
        let heights: Vec<usize> = blocks.iter().map(|r| r.first().map_or(0, |b| b.rows)).collect();
        let first = blocks.first().map_or(&[][..], |r| *r);
        let widths: Vec<usize> = first.iter().map(|b| b.cols).collect();
        for (bi, row) in blocks.iter().enumerate() {
            if row.len() != widths.len() {
                return dim_err("block rows have different lengths");
            }
            for (bj, b) in row.iter().enumerate() {
                if b.rows != heights[bi] || b.cols != widths[bj] {
                    return dim_err(format!("block ({bi},{bj}) is {}x{}", b.rows, b.cols));
                }
            }
        }
        let mut out = Matrix::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                out.set_block(r0, c0, b);
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            out.set_block(r0, c0, b);
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; fallible callers use `try_*`.
impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthogonal; column `i` pairs with `values[i]`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|r| self.vectors[(r, i)]).collect()
    }
}

fn require_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return dim_err(format!("expected a square matrix, got {}x{}", a.rows, a.cols));
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return dim_err(format!("matrix is not symmetric (max |A - Aᵀ| = {asym:.3e})"));
    }
    Ok(())
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    require_symmetric(a)?;
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.max_abs();

    if scale > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)] * m[(i, j)])
                .sum();
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m[(k, p)];
                        let akq = m[(k, q)];
                        m[(k, p)] = c * akp - s * akq;
                        m[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[(p, k)];
                        let aqk = m[(q, k)];
                        m[(p, k)] = c * apk - s * aqk;
                        m[(q, k)] = s * apk + c * aqk;
                    }
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

pub fn max_eig(a: &Matrix) -> Result<f64> {
    Ok(sym_eig(a)?.max())
}

pub fn min_eig(a: &Matrix) -> Result<f64> {
    Ok(sym_eig(a)?.min())
}

/// Negative semidefiniteness: largest eigenvalue at most `tol`.
pub fn is_nsd(a: &Matrix, tol: f64) -> Result<bool> {
    Ok(max_eig(a)? <= tol)
}

/// Positive semidefiniteness: smallest eigenvalue at least `-tol`.
pub fn is_psd(a: &Matrix, tol: f64) -> Result<bool> {
    Ok(min_eig(a)? >= -tol)
}

/// Spectral norm `sqrt(λmax(AᵀA))`.
pub fn spectral_norm(a: &Matrix) -> f64 {
    let g = &a.transpose() * a;
    max_eig(&g).map(|l| l.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

/// Numerical rank from the singular values (square roots of the eigenvalues
/// of `AᵀA`), counting those above `1e-9·σmax`.
pub fn rank(a: &Matrix) -> usize {
    if a.rows == 0 || a.cols == 0 {
        return 0;
    }
    let g = (&a.transpose() * a).symmetrized();
    let eig = match sym_eig(&g) {
        Ok(e) => e,
        Err(_) => return 0,
    };
    let smax = eig.max().max(0.0).sqrt();
    if smax == 0.0 {
        return 0;
    }
    eig.values.iter().filter(|l| l.max(0.0).sqrt() > 1e-9 * smax).count()
}

/// Lower-triangular Cholesky factor `L` with `P = L Lᵀ`.
pub fn cholesky(p: &Matrix) -> Result<Matrix> {
    require_symmetric(p)?;
    let n = p.rows;
    let p = p.symmetrized();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            let value = min_eig(&p).unwrap_or(d);
            return Err(Error::Certificate {
                message: "matrix is not positive definite".into(),
                value,
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// LU factorization with partial pivoting, stored compactly.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

fn lu_factor(a: &Matrix) -> Result<Lu> {
    if !a.is_square() {
        return dim_err(format!("LU needs a square matrix, got {}x{}", a.rows, a.cols));
    }
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= 1e-14 * scale {
            return Err(Error::Certificate { message: "matrix is singular".into(), value: pmax });
        }
        if piv != k {
            perm.swap(piv, k);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A x = b` by partial-pivot LU.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return dim_err(format!("right-hand side has length {}, expected {}", b.len(), a.rows));
    }
    Ok(lu_factor(a)?.solve(b))
}

/// Solves `A X = B` column by column.
pub fn solve_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows != a.rows {
        return dim_err(format!("right-hand side has {} rows, expected {}", b.rows, a.rows));
    }
    let lu = lu_factor(a)?;
    let mut x = Matrix::zeros(b.rows, b.cols);
    for j in 0..b.cols {
        let col: Vec<f64> = (0..b.rows).map(|i| b[(i, j)]).collect();
        for (i, v) in lu.solve(&col).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve_matrix(a, &Matrix::identity(a.rows))
}

/// Matrix exponential: degree-6 Padé approximant after scaling `A` down to
/// `‖A‖₁ ≤ 0.5`, followed by repeated squaring.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return dim_err(format!("expm needs a square matrix, got {}x{}", a.rows, a.cols));
    }
    let n = a.rows;
    let norm = a.norm1();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(2f64.powi(-squarings));

    const Q: usize = 6;
    let mut coeffs = [0.0; Q + 1];
    coeffs[0] = 1.0;
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
    }

    let mut num = Matrix::identity(n);
    let mut den = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &scaled;
        let term = power.scale(*c);
        num = &num + &term;
        den = if k % 2 == 0 { &den + &term } else { &den - &term };
    }
    let mut result = solve_matrix(&den, &num)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Eigenvalues `(re, im)` of a general real square matrix via Hessenberg
/// reduction and shifted QR.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() {
        return dim_err(format!("eigenvalues need a square matrix, got {}x{}", a.rows, a.cols));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    // One-based working copy keeps the index arithmetic of the QR sweep readable.
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    hessenberg(&mut h, n);
    for i in 1..=n {
        for j in 1..=n {
            if i > j + 1 {
                h[i][j] = 0.0;
            }
        }
    }
    hessenberg_qr(&mut h, n)
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x = 0.0_f64;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
}

fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<(f64, f64)>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nu - 1][nu - 1];
            w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != 0.0 {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(Error::Certificate {
                    message: "eigenvalue iteration did not converge".into(),
                    value: f64::NAN,
                });
            }
            if its == 10 || its == 20 {
                t += x;
                for i in 1..=nu {
                    a[i][i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nu - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nu - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
            if l >= nu - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max))
}

/// Solves the continuous Lyapunov equation `AᵀP + PA = −Q` for Hurwitz `A`
/// by Kronecker vectorization.
pub fn lyap(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    if !a.is_square() || !q.is_square() || a.rows != q.rows {
        return dim_err("lyap needs square A and Q of equal size");
    }
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::Certificate {
            message: "A is not Hurwitz (eigenvalue with nonnegative real part)".into(),
            value: abscissa,
        });
    }
    let n = a.rows;
    let mut k = Matrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for l in 0..n {
                k[(row, l * n + j)] += a[(l, i)];
                k[(row, i * n + l)] += a[(l, j)];
            }
        }
    }
    let rhs: Vec<f64> = q.data.iter().map(|v| -v).collect();
    let p = solve(&k, &rhs)?;
    Ok(Matrix::new(n, n, p)?.symmetrized())
}

/// `max { xᵀMx : xᵀPx ≤ ξ }` for symmetric `M` and positive definite `P`.
pub fn quad_sublevel_max(m: &Matrix, p: &Matrix, xi: f64) -> Result<f64> {
    if xi < 0.0 || !xi.is_finite() {
        return param_err(format!("sublevel value must be finite and nonnegative, got {xi}"));
    }
    require_symmetric(m)?;
    if m.rows != p.rows {
        return dim_err(format!("M is {}x{}, P is {}x{}", m.rows, m.cols, p.rows, p.cols));
    }
    let pmin = min_eig(p)?;
    if pmin <= 1e-12 {
        return Err(Error::Certificate { message: "P is not positive definite".into(), value: pmin });
    }
    let l = cholesky(p)?;
    let linv = inverse(&l)?;
    let g = (&(&linv * m) * &linv.transpose()).symmetrized();
    Ok(xi * max_eig(&g)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&Matrix::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = sym_eig(&Matrix::diag(&[3.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 3.0]);
    }

    #[test]
    fn eig_two_by_two() {
        let e = sym_eig(&Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!(close(e.values[0], 1.0, 1e-14));
        assert!(close(e.values[1], 3.0, 1e-14));
    }

    #[test]
    fn eig_rejects_asymmetric_and_rectangular() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(Error::Dimension(_))));
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn nsd_boundaries() {
        assert!(is_nsd(&Matrix::identity(3).scale(-1.0), 0.0).unwrap());
        assert!(is_nsd(&Matrix::diag(&[0.0, -1.0]), 0.0).unwrap());
        assert!(!is_nsd(&Matrix::diag(&[1e-6, -1.0]), 0.0).unwrap());
    }

    #[test]
    fn expm_simple_cases() {
        let z = expm(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(z, Matrix::identity(3));
        let d = expm(&Matrix::diag(&[1.0, -1.0])).unwrap();
        assert!(close(d[(0, 0)], std::f64::consts::E, 1e-14));
        assert!(close(d[(1, 1)], (-1.0f64).exp(), 1e-15));
        assert!(close(d[(0, 1)], 0.0, 1e-16));
    }

    #[test]
    fn lyap_scaled_identity() {
        let p = lyap(&Matrix::identity(2).scale(-1.0), &Matrix::identity(2).scale(2.0)).unwrap();
        assert!((&p - &Matrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn lyap_rejects_unstable() {
        let err = lyap(&Matrix::diag(&[-1.0, 0.5]), &Matrix::identity(2)).unwrap_err();
        match err {
            Error::Certificate { value, .. } => assert!(close(value, 0.5, 1e-12)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_identity() {
        let b = [1.0, -2.0, 3.5];
        assert_eq!(solve(&Matrix::identity(3), &b).unwrap(), b.to_vec());
    }

    #[test]
    fn solve_singular_is_error() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(solve(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn general_eigenvalues_rotation_and_triangular() {
        let rot = Matrix::from_rows(&[&[-1.0, 2.0], &[-2.0, -1.0]]);
        let mut ev = eigenvalues(&rot).unwrap();
        ev.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert!(close(ev[0].0, -1.0, 1e-12) && close(ev[0].1, -2.0, 1e-12));
        assert!(close(ev[1].0, -1.0, 1e-12) && close(ev[1].1, 2.0, 1e-12));

        let tri = Matrix::from_rows(&[&[1.0, 5.0, 7.0], &[0.0, -2.0, 3.0], &[0.0, 0.0, 4.0]]);
        let mut re: Vec<f64> = eigenvalues(&tri).unwrap().iter().map(|e| e.0).collect();
        re.sort_by(f64::total_cmp);
        assert!(close(re[0], -2.0, 1e-12) && close(re[1], 1.0, 1e-12) && close(re[2], 4.0, 1e-12));
    }

    #[test]
    fn sublevel_max_simple() {
        let i2 = Matrix::identity(2);
        assert!(close(quad_sublevel_max(&i2, &i2, 4.0).unwrap(), 4.0, 1e-14));
        let m = Matrix::diag(&[2.0, 1.0]);
        assert!(close(quad_sublevel_max(&m, &i2, 1.0).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn sublevel_max_needs_pd() {
        let err = quad_sublevel_max(&Matrix::identity(2), &Matrix::diag(&[1.0, 0.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::Certificate { .. }));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&Matrix::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn rank_of_stacked_rows() {
        assert_eq!(rank(&Matrix::from_rows(&[&[1.0, 0.0]])), 1);
        assert_eq!(rank(&Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]])), 2);
        assert_eq!(rank(&Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]])), 1);
    }

    #[test]
    fn matrix_serde_checks_shape() {
        let bad: std::result::Result<Matrix, _> = serde_json::from_str(r#"{"rows":2,"cols":2,"data":[1,2,3]}"#);
        assert!(bad.is_err());
        let ok: Matrix = serde_json::from_str(r#"{"rows":1,"cols":2,"data":[1,2]}"#).unwrap();
        assert_eq!(ok, Matrix::from_rows(&[&[1.0, 2.0]]));
    }
}
