//! Dense complex linear algebra for small systems.
//!
//! The solver works with matrices whose largest dimension is the surface
//! element count (a few hundred), so everything here is straightforward
//! dense arithmetic: a row-major matrix type, Cholesky-based Hermitian
//! positive-definite solves, and spectral norms by power iteration on the
//! smaller Gram side. All routines are deterministic — no randomized
//! starts, no thread-dependent reduction order.

use num_complex::Complex64;

use crate::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Owned complex vector.
pub type CVec = Vec<C64>;

/// Absolute tolerance on `max |A[i][j] - conj(A[j][i])|` when a routine
/// requires Hermitian input. Internal constructions mirror conjugate
/// entries explicitly and therefore pass with exactly zero asymmetry.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative tolerance on the Rayleigh quotient for power-iteration
/// convergence in [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Iteration cap for [`spectral_norm`]; reaching it returns the current
/// estimate rather than failing, since the Rayleigh quotient is a valid
/// lower bound at every step.
pub const SPECTRAL_MAX_ITERS: usize = 10_000;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Build a matrix entry by entry from `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Assemble a matrix whose `j`-th column is `cols[j]`.
    ///
    /// # Panics
    /// Panics if the columns have unequal lengths.
    pub fn from_cols(cols: &[CVec]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        assert!(
            cols.iter().all(|c| c.len() == rows),
            "from_cols requires equal-length columns"
        );
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Copy of column `j`.
    ///
    /// # Panics
    /// Panics if `j` is out of range.
    pub fn col(&self, j: usize) -> CVec {
        assert!(j < self.cols, "column {j} out of range for {} cols", self.cols);
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Matrix–vector product `A x`.
    ///
    /// # Panics
    /// Panics if `x.len() != self.cols()`.
    pub fn mul_vec(&self, x: &[C64]) -> CVec {
        assert_eq!(x.len(), self.cols, "mul_vec length mismatch");
        let mut y = vec![C64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// Conjugate-transposed product `A^H x`.
    ///
    /// # Panics
    /// Panics if `x.len() != self.rows()`.
    pub fn herm_mul_vec(&self, x: &[C64]) -> CVec {
        assert_eq!(x.len(), self.rows, "herm_mul_vec length mismatch");
        let mut y = vec![C64::new(0.0, 0.0); self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let xi = x[i];
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a.conj() * xi;
            }
        }
        y
    }

    /// Matrix product `A B`.
    ///
    /// # Panics
    /// Panics if the inner dimensions disagree.
    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Conjugate transpose `A^H`.
    pub fn herm(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Gram matrix `A^H A`, constructed exactly Hermitian: entries are
    /// computed for `i <= j` and mirrored by conjugation, with real
    /// diagonal accumulation.
    pub fn gram_left(&self) -> CMat {
        let n = self.cols;
        let mut g = CMat::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for k in 0..self.rows {
                diag += self[(k, i)].norm_sqr();
            }
            g[(i, i)] = C64::new(diag, 0.0);
            for j in i + 1..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..self.rows {
                    acc += self[(k, i)].conj() * self[(k, j)];
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    /// Gram matrix `A A^H`, constructed exactly Hermitian like
    /// [`gram_left`](Self::gram_left).
    pub fn gram_right(&self) -> CMat {
        let n = self.rows;
        let mut g = CMat::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for k in 0..self.cols {
                diag += self[(i, k)].norm_sqr();
            }
            g[(i, i)] = C64::new(diag, 0.0);
            for j in i + 1..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self[(i, k)] * self[(j, k)].conj();
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    /// Scale the whole matrix by a real factor, in place.
    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Add `s` to every diagonal entry, in place.
    pub fn add_scaled_identity(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += s;
        }
    }

    /// Rank-one Hermitian update `A += w v v^H`, mirrored so the result
    /// stays exactly Hermitian when `A` was.
    ///
    /// # Panics
    /// Panics if the matrix is not square of order `v.len()`.
    pub fn add_scaled_outer(&mut self, w: f64, v: &[C64]) {
        assert_eq!(self.rows, self.cols, "add_scaled_outer needs a square matrix");
        assert_eq!(self.rows, v.len(), "add_scaled_outer length mismatch");
        for i in 0..v.len() {
            self[(i, i)] += w * v[i].norm_sqr();
            for j in i + 1..v.len() {
                let delta = w * v[i] * v[j].conj();
                self[(i, j)] += delta;
                self[(j, i)] += delta.conj();
            }
        }
    }

    /// Column scaling `A diag(d)`.
    ///
    /// # Panics
    /// Panics if `d.len() != self.cols()`.
    pub fn scale_cols(&self, d: &[C64]) -> CMat {
        assert_eq!(d.len(), self.cols, "scale_cols length mismatch");
        CMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    /// Largest entrywise deviation from Hermitian symmetry,
    /// `max |A[i][j] - conj(A[j][i])|` over `i <= j`.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of range");
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of range");
        &mut self.data[i * self.cols + j]
    }
}

/// Euclidean norm of a complex vector; `0.0` for the empty vector.
pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Inner product `x^H y` (conjugate-linear in the first argument).
///
/// # Panics
/// Panics if the vectors have different lengths.
pub fn cdot(x: &[C64], y: &[C64]) -> C64 {
    assert_eq!(x.len(), y.len(), "cdot length mismatch");
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Real scaling of a vector.
pub fn scale_re(x: &[C64], s: f64) -> CVec {
    x.iter().map(|v| v * s).collect()
}

/// Elementwise difference `a - b`.
///
/// # Panics
/// Panics if the vectors have different lengths.
pub fn vec_sub(a: &[C64], b: &[C64]) -> CVec {
    assert_eq!(a.len(), b.len(), "vec_sub length mismatch");
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solve `A x = b` for Hermitian positive-definite `A` by Cholesky
/// factorization.
///
/// The factorization reads only the lower triangle (plus real diagonal
/// parts); the upper triangle participates only in the Hermitian check,
/// which rejects inputs whose asymmetry exceeds [`HERMITIAN_TOL`].
pub fn solve_hpd(a: &CMat, b: &[C64]) -> Result<CVec> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "solve_hpd needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_hpd rhs length {} does not match matrix order {}",
            b.len(),
            a.rows()
        )));
    }
    let asym = a.max_asymmetry();
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { max_asymmetry: asym });
    }

    let n = a.rows();
    let l = chol_factor(a)?;

    // Forward substitution: L y = b.
    let mut y = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[(i, k)] * y[k];
        }
        y[i] = acc / l[(i, i)].re;
    }
    // Backward substitution: L^H x = y.
    let mut x = vec![C64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in i + 1..n {
            acc -= l[(k, i)].conj() * x[k];
        }
        x[i] = acc / l[(i, i)].re;
    }
    Ok(x)
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
fn chol_factor(a: &CMat) -> Result<CMat> {
    let n = a.rows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot.is_finite() && pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot, index: j });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Largest singular value of `A` by power iteration on the smaller Gram
/// operator (`A^H A` or `A A^H`).
///
/// The start vector is the deterministic all-ones direction, and the
/// iteration stops once the Rayleigh quotient is stationary to
/// [`SPECTRAL_TOL`] (relative) or after [`SPECTRAL_MAX_ITERS`] steps,
/// whichever comes first.
pub fn spectral_norm(a: &CMat) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    // Iterate x -> A^H A x on whichever side is smaller; both operators
    // share nonzero eigenvalues.
    let tall = a.cols() <= a.rows();
    let n = if tall { a.cols() } else { a.rows() };

    let mut x = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    let mut rayleigh_prev = f64::INFINITY;
    let mut rayleigh = 0.0;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let y = if tall {
            a.herm_mul_vec(&a.mul_vec(&x))
        } else {
            a.mul_vec(&a.herm_mul_vec(&x))
        };
        // x is unit, so x^H y = ||A x||^2 (or ||A^H x||^2): a Rayleigh
        // quotient of the PSD Gram operator.
        rayleigh = cdot(&x, &y).re;
        let scale = norm2(&y);
        if scale == 0.0 {
            // x landed in the null space; with the PSD operator this means
            // the Rayleigh quotient is zero as well.
            return Ok(0.0);
        }
        if (rayleigh - rayleigh_prev).abs() <= SPECTRAL_TOL * rayleigh.abs().max(f64::MIN_POSITIVE)
        {
            break;
        }
        rayleigh_prev = rayleigh;
        x = scale_re(&y, 1.0 / scale);
    }
    Ok(rayleigh.max(0.0).sqrt())
}
