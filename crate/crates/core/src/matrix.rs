//! Dense row-major matrices, SVD and seeded Gaussian sampling.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Maximum number of Jacobi sweeps before [`svd`] gives up.
pub const MAX_SVD_SWEEPS: usize = 80;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Dense real matrix stored in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// A single row `1 × n`.
    pub fn row_vector(values: &[f64]) -> Self {
        Self { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so guard the degenerate case
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, Op::N, other, Op::N, 0.0, &mut out);
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(1.0, self, Op::N, other, Op::T, 0.0, &mut out);
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(1.0, self, Op::T, other, Op::N, 0.0, &mut out);
        out
    }

    /// Matrix–vector product `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        self.iter_rows().map(|row| dot(row, v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "t_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.iter_rows().zip(v) {
            axpy(vi, row, &mut out);
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        let mut m = self.clone();
        m.scale(alpha);
        m
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.frobenius_norm_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn expect_shape(&self, context: &'static str, expected: (usize, usize)) -> Result<()> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { context, expected, actual: self.shape() })
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Whether a GEMM operand is used as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c ← alpha · op(a) · op(b) + beta · c`.
///
/// Panics on incompatible shapes.
pub fn gemm(alpha: f64, a: &Matrix, ta: Op, b: &Matrix, tb: Op, beta: f64, c: &mut Matrix) {
    let (m, k, rsa, csa) = match ta {
        Op::N => (a.rows, a.cols, a.cols as isize, 1),
        Op::T => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match tb {
        Op::N => (b.rows, b.cols, b.cols as isize, 1),
        Op::T => (b.cols, b.rows, 1, b.cols as isize),
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }
    // SAFETY: the strides describe exactly the row-major buffers of `a`, `b`
    // and `c`, whose extents were checked against (m, k, n) above, and `c`
    // is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += alpha · x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Thin singular value decomposition `a = u · diag(sigma) · vt`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix,
    /// Non-negative, sorted descending.
    pub sigma: Vec<f64>,
    /// `k × cols` with orthonormal rows.
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.vt)
    }
}

/// Column-major working copy for the Jacobi iteration.
struct Columns {
    len: usize,
    count: usize,
    data: Vec<f64>,
}

impl Columns {
    fn of(a: &Matrix, transposed: bool) -> Self {
        // columns of `a`, or of `aᵀ` (i.e. the rows of `a`)
        if transposed {
            Self { len: a.cols, count: a.rows, data: a.data.clone() }
        } else {
            let t = a.transpose();
            Self { len: a.rows, count: a.cols, data: t.data }
        }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    #[inline]
    fn pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let (lo, hi) = self.data.split_at_mut(q * self.len);
        (&mut lo[p * self.len..(p + 1) * self.len], &mut hi[..self.len])
    }
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// One-sided (Hestenes) Jacobi: orthogonalizes the columns of `w` in place,
/// optionally accumulating the right rotations into `v`.
fn hestenes(w: &mut Columns, mut v: Option<&mut Columns>, shape: (usize, usize)) -> Result<()> {
    let n = w.count;
    let tol = f64::EPSILON * (w.len.max(8) as f64);
    let mut norms = vec![0.0; n];
    for sweep in 0..MAX_SVD_SWEEPS {
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = norm_sq(w.col(j));
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= tol * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let (wp, wq) = w.pair_mut(p, q);
                rotate(wp, wq, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
                if let Some(v) = v.as_deref_mut() {
                    let (vp, vq) = v.pair_mut(p, q);
                    rotate(vp, vq, c, s);
                }
            }
        }
        if !rotated {
            return Ok(());
        }
        if sweep + 1 == MAX_SVD_SWEEPS {
            break;
        }
    }
    Err(Error::SvdNoConvergence { rows: shape.0, cols: shape.1, sweeps: MAX_SVD_SWEEPS })
}

fn check_svd_input(a: &Matrix) -> Result<()> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::InvalidArgument(alloc::format!("svd of an empty {}x{} matrix", a.rows, a.cols)));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    Ok(())
}

/// Thin SVD by one-sided Jacobi.
///
/// Works on the longer orientation of `a` so the rotated vectors are as short
/// as possible. Deterministic for identical input.
pub fn svd(a: &Matrix) -> Result<Svd> {
    check_svd_input(a)?;
    let wide = a.rows < a.cols;
    // Jacobi on the columns of `b`, where b = a (tall) or b = aᵀ (wide)
    let mut w = Columns::of(a, wide);
    let k = w.count;
    let mut v = Columns { len: k, count: k, data: vec![0.0; k * k] };
    for j in 0..k {
        v.data[j * k + j] = 1.0;
    }
    hestenes(&mut w, Some(&mut v), a.shape())?;

    let m = w.len;
    let mut sigma: Vec<f64> = (0..k).map(|j| libm::sqrt(norm_sq(w.col(j)))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));

    let smax = sigma[order[0]];
    let zero_cut = smax * f64::EPSILON;
    // left vectors of b as columns (column-major, m × k), sorted
    let mut left = vec![0.0; m * k];
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        if s > zero_cut && s > 0.0 {
            let col = w.col(src);
            for (o, x) in left[dst * m..(dst + 1) * m].iter_mut().zip(col) {
                *o = x / s;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut left, m, k, &missing);
    let right: Vec<f64> = order.iter().flat_map(|&src| v.data[src * k..(src + 1) * k].iter().copied()).collect();
    sigma = order.iter().map(|&i| sigma[i]).collect();

    // left: m×k column-major == k×m row-major; right: k×k column-major == k×k row-major
    let left_rows = Matrix { rows: k, cols: m, data: left };
    let right_rows = Matrix { rows: k, cols: k, data: right };
    if wide {
        // aᵀ = L Σ Rᵀ  ⇒  a = R Σ Lᵀ
        Ok(Svd { u: right_rows.transpose(), sigma, vt: left_rows })
    } else {
        Ok(Svd { u: left_rows.transpose(), sigma, vt: right_rows })
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [f64], m: usize, k: usize, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let mut filled: Vec<bool> = vec![true; k];
    for &j in missing {
        filled[j] = false;
        cols[j * m..(j + 1) * m].fill(0.0);
    }
    let mut candidate = 0;
    for &j in missing {
        loop {
            assert!(candidate < m, "orthonormal completion ran out of basis vectors");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram–Schmidt
            for _ in 0..2 {
                for (other, done) in filled.iter().enumerate() {
                    if !done {
                        continue;
                    }
                    let c = &cols[other * m..(other + 1) * m];
                    let proj = dot(c, &e);
                    axpy(-proj, c, &mut e);
                }
            }
            let nrm = libm::sqrt(norm_sq(&e));
            if nrm > 0.5 {
                for (o, x) in cols[j * m..(j + 1) * m].iter_mut().zip(&e) {
                    *o = x / nrm;
                }
                filled[j] = true;
                break;
            }
        }
    }
}

/// Singular values only, sorted descending. Cheaper than [`svd`].
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    check_svd_input(a)?;
    let mut w = Columns::of(a, a.rows < a.cols);
    hestenes(&mut w, None, a.shape())?;
    let mut s: Vec<f64> = (0..w.count).map(|j| libm::sqrt(norm_sq(w.col(j)))).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Largest singular value.
pub fn operator_norm(a: &Matrix) -> Result<f64> {
    if a.rows == 1 || a.cols == 1 {
        check_svd_input(a)?;
        return Ok(a.frobenius_norm());
    }
    Ok(singular_values(a)?[0])
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular_value(a: &Matrix) -> Result<f64> {
    if a.rows == 1 || a.cols == 1 {
        check_svd_input(a)?;
        return Ok(a.frobenius_norm());
    }
    Ok(*singular_values(a)?.last().expect("non-empty"))
}

/// Number of singular values above `RANK_TOLERANCE · σ_max`.
pub fn numerical_rank(a: &Matrix) -> Result<usize> {
    let s = singular_values(a)?;
    let cut = s[0] * RANK_TOLERANCE;
    Ok(s.iter().filter(|&&x| x > cut).count())
}

/// Seeded standard normal generator: ChaCha20 stream + Box–Muller.
///
/// This is the single source of randomness for initialization and data
/// generation; changing it changes every recorded trace.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    /// An independent stream under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform on (0, 1].
    fn uniform_open0(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform_open0();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn normal(&mut self, std_dev: f64) -> f64 {
        std_dev * self.standard_normal()
    }

    /// `rows × cols` matrix of i.i.d. `N(0, variance)` entries, filled row by row.
    pub fn matrix(&mut self, rows: usize, cols: usize, variance: f64) -> Matrix {
        let sd = libm::sqrt(variance);
        let data = (0..rows * cols).map(|_| self.normal(sd)).collect();
        Matrix { rows, cols, data }
    }
}

/// `rows × cols` matrix of i.i.d. `N(0, variance)` entries from a fresh stream.
pub fn gaussian_matrix(rows: usize, cols: usize, variance: f64, seed: u64) -> Result<Matrix> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("gaussian variance must be positive, got {variance}")));
    }
    Ok(GaussianSampler::new(seed).matrix(rows, cols, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn orthonormal_columns(m: &Matrix, tol: f64) {
        let g = m.t_matmul(m);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_close(g[(i, j)], want, tol);
            }
        }
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.sigma.len(), 3);
        for x in &s.sigma {
            assert_close(*x, 1.0, 1e-15);
        }
    }

    #[test]
    fn diagonal_singular_values_are_entries() {
        let a = Matrix::from_diag(&[0.5, 2.0]);
        let s = svd(&a).unwrap();
        assert_close(s.sigma[0], 2.0, 1e-15);
        assert_close(s.sigma[1], 0.5, 1e-15);
        assert_close(operator_norm(&a).unwrap(), 2.0, 1e-15);
        assert_close(min_singular_value(&a).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn zero_and_rank_deficient() {
        assert_eq!(operator_norm(&Matrix::zeros(2, 2)).unwrap(), 0.0);
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(min_singular_value(&a).unwrap() < 1e-12);
        assert_eq!(numerical_rank(&a).unwrap(), 1);
        let s = svd(&a).unwrap();
        orthonormal_columns(&s.u, 1e-12);
        orthonormal_columns(&s.vt.transpose(), 1e-12);
        assert!(s.reconstruct().as_slice().iter().zip(a.as_slice()).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn zero_matrix_svd_is_orthonormal() {
        let s = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        orthonormal_columns(&s.u, 1e-14);
    }

    #[test]
    fn seeded_4x4_reconstructs() {
        let a = gaussian_matrix(4, 4, 1.0, 11).unwrap();
        let s = svd(&a).unwrap();
        let mut diff = s.reconstruct();
        diff.add_scaled(-1.0, &a);
        assert!(diff.frobenius_norm() <= 1e-10 * a.frobenius_norm());
        orthonormal_columns(&s.u, 1e-10);
    }

    #[test]
    fn wide_and_tall_orientations() {
        for (r, c) in [(3, 7), (7, 3), (1, 5), (5, 1)] {
            let a = gaussian_matrix(r, c, 1.0, (r * 10 + c) as u64).unwrap();
            let s = svd(&a).unwrap();
            assert_eq!(s.u.shape(), (r, r.min(c)));
            assert_eq!(s.vt.shape(), (r.min(c), c));
            let mut diff = s.reconstruct();
            diff.add_scaled(-1.0, &a);
            assert!(diff.frobenius_norm() <= 1e-12 * a.frobenius_norm());
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let a = Matrix::from_rows(&[[1.0, f64::NAN]]);
        assert_eq!(svd(&a).unwrap_err(), Error::NonFinite("svd input"));
    }

    #[test]
    fn gemm_transposes_agree_with_naive() {
        let a = gaussian_matrix(3, 5, 1.0, 1).unwrap();
        let b = gaussian_matrix(4, 5, 1.0, 2).unwrap();
        let c = a.matmul_t(&b);
        let c2 = a.matmul(&b.transpose());
        for (x, y) in c.as_slice().iter().zip(c2.as_slice()) {
            assert_close(*x, *y, 1e-14);
        }
        let d = a.t_matmul(&a);
        for i in 0..5 {
            for j in 0..5 {
                let naive: f64 = (0..3).map(|k| a[(k, i)] * a[(k, j)]).sum();
                assert_close(d[(i, j)], naive, 1e-14);
            }
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = gaussian_matrix(5, 5, 0.3, 99).unwrap();
        let b = gaussian_matrix(5, 5, 0.3, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gaussian_matrix(5, 5, 0.3, 100).unwrap());
        assert!(gaussian_matrix(2, 2, 0.0, 1).is_err());
    }
}
