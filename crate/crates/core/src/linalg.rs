//! Complex linear-algebra kernels.
//!
//! Small Hermitian solves and log-determinants go through a dense Cholesky
//! factorization. Large Hermitian operators are handled matrix-free through
//! [`HermitianOperator`]: only block products `D X` are ever requested, and
//! the spectral interval is estimated from an analytic lower bound (the
//! operator's identity coefficient) plus shifted block power iteration for
//! the top.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CMat, Error, Result};

/// Multiplicative inflation applied to the power-iteration estimate of `lambda_max`.
pub const SPECTRAL_SAFETY: f64 = 1.01;

/// Default relative Rayleigh-quotient change that stops power iteration.
pub const POWER_TOL: f64 = 1e-4;

/// Default iteration cap for power iteration.
pub const POWER_MAX_ITERS: usize = 2000;

/// Columns in the power-iteration block.
pub const POWER_BLOCK: usize = 2;

/// Real inner product `Re tr(A^H B)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Squared Frobenius norm.
pub fn norm_sq(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Replace `a` by `(a + a^H) / 2`.
pub fn hermitianize(a: &mut CMat) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

/// Trace of a square matrix.
pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

fn cholesky(a: &CMat, context: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{context}: expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let chol = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite { context })?;
    // complex square roots let some indefinite inputs through
    let l = chol.l_dirty();
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re) {
            return Err(Error::NotPositiveDefinite { context });
        }
    }
    Ok(chol)
}

/// Natural-log determinant of a Hermitian positive definite matrix.
pub fn logdet_hpd_nats(a: &CMat) -> Result<f64> {
    let chol = cholesky(a, "logdet")?;
    let l = chol.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Base-2 log determinant of a Hermitian positive definite matrix.
pub fn logdet_hpd(a: &CMat) -> Result<f64> {
    Ok(logdet_hpd_nats(a)? / std::f64::consts::LN_2)
}

/// Solve `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(cholesky(a, "solve")?.solve(b))
}

/// i.i.d. circularly-symmetric standard complex Gaussian entries, CN(0, 1).
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// A Hermitian positive (semi)definite operator known only through block products.
pub trait HermitianOperator: Sync {
    /// Side length of the operator.
    fn dim(&self) -> usize;

    /// Compute `D X` for a `dim x c` block `X`.
    fn apply(&self, x: &CMat) -> CMat;

    /// Known multiple of the identity contained in the operator (`D - shift I` is PSD).
    fn shift(&self) -> f64 {
        0.0
    }
}

impl<T: HermitianOperator + ?Sized> HermitianOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &CMat) -> CMat {
        (**self).apply(x)
    }
    fn shift(&self) -> f64 {
        (**self).shift()
    }
}

/// Operator backed by a closure.
pub struct FnOperator<F> {
    dim: usize,
    shift: f64,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&CMat) -> CMat + Sync,
{
    pub fn new(dim: usize, shift: f64, f: F) -> Self {
        Self { dim, shift, f }
    }
}

impl<F> HermitianOperator for FnOperator<F>
where
    F: Fn(&CMat) -> CMat + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &CMat) -> CMat {
        (self.f)(x)
    }
    fn shift(&self) -> f64 {
        self.shift
    }
}

/// Operator backed by an explicit dense Hermitian matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: CMat,
    pub shift: f64,
}

impl DenseOperator {
    pub fn new(matrix: CMat, shift: f64) -> Self {
        Self { matrix, shift }
    }
}

impl HermitianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &CMat) -> CMat {
        &self.matrix * x
    }
    fn shift(&self) -> f64 {
        self.shift
    }
}

/// Interval `[lambda_min, lambda_max]` bracketing the spectrum of an HPD operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInterval {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SpectralInterval {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        let ok = lambda_min.is_finite()
            && lambda_max.is_finite()
            && lambda_min > 0.0
            && lambda_min <= lambda_max;
        if !ok {
            return Err(Error::InvalidInterval {
                lambda_min,
                lambda_max,
            });
        }
        Ok(Self {
            lambda_min,
            lambda_max,
        })
    }

    /// Condition number estimate `lambda_max / lambda_min`.
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lambda_min && lambda <= self.lambda_max
    }
}

/// Result of a power-iteration run.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    /// Largest Ritz value of the final block (an under-estimate of `lambda_max`).
    pub value: f64,
    /// Unit-norm Ritz vector of that value, usable as a warm start.
    pub vector: CMat,
    pub iters: usize,
}

/// Orthonormal basis of the column span of `w` by modified Gram-Schmidt.
/// Columns that are numerically dependent on earlier ones are dropped.
fn orthonormal_columns(w: &CMat) -> CMat {
    let scale = (0..w.ncols()).map(|j| w.column(j).norm()).fold(0.0, f64::max);
    let mut basis: Vec<CMat> = Vec::with_capacity(w.ncols());
    for j in 0..w.ncols() {
        let mut c = w.columns(j, 1).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dotc(&c);
                c.zip_apply(q, |a, b| *a -= b * p);
            }
        }
        let n = c.norm();
        if n.is_finite() && n > 1e-10 * scale {
            basis.push(c / Complex64::from(n));
        }
    }
    let mut out = CMat::zeros(w.nrows(), basis.len());
    for (j, q) in basis.iter().enumerate() {
        out.set_column(j, &q.column(0));
    }
    out
}

/// Shifted block power iteration for the largest eigenvalue.
///
/// Iterates a block of `POWER_BLOCK` columns on `D - shift I`, which has the
/// same eigenvectors and a larger relative gap, and reports the largest Ritz
/// value of `D` on the block. Stops when its relative change drops below
/// `tol`. A block is far less likely than a single vector to stall near the
/// second eigenvalue when the start is nearly orthogonal to the top one. The
/// first column is `warm` when given; the rest are complex Gaussian draws
/// from `seed`.
pub fn power_iteration(
    op: &dyn HermitianOperator,
    tol: f64,
    max_iters: usize,
    seed: u64,
    warm: Option<&CMat>,
) -> Result<PowerEstimate> {
    let n = op.dim();
    let shift = op.shift();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = complex_gaussian(n, POWER_BLOCK.min(n), &mut rng);
    if let Some(w) = warm {
        if w.nrows() == n && w.ncols() == 1 && norm_sq(w) > 0.0 {
            v.set_column(0, &w.column(0));
        }
    }
    v = orthonormal_columns(&v);

    let mut prev = f64::NAN;
    let mut best = 0.0_f64;
    for it in 1..=max_iters.max(1) {
        let mut w = op.apply(&v);
        let mut h = v.adjoint() * &w;
        hermitianize(&mut h);
        let eig = SymmetricEigen::new(h);
        let top = eig.eigenvalues.imax();
        let rq = eig.eigenvalues[top];
        best = best.max(rq);
        let ritz = || {
            let x = &v * eig.eigenvectors.columns(top, 1);
            let nx = x.norm();
            x / Complex64::from(nx)
        };
        if it > 1 && (rq - prev).abs() <= tol * rq.abs() {
            return Ok(PowerEstimate {
                value: rq,
                vector: ritz(),
                iters: it,
            });
        }
        prev = rq;
        if shift != 0.0 {
            w.zip_apply(&v, |a, b| *a -= b * shift);
        }
        let next = orthonormal_columns(&w);
        if next.ncols() == 0 {
            // D - shift I annihilates the block: the operator is shift * I on this subspace.
            return Ok(PowerEstimate {
                value: rq,
                vector: ritz(),
                iters: it,
            });
        }
        v = next;
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        best,
    })
}

/// Largest-eigenvalue estimate by power iteration (no safety inflation).
pub fn max_eigenvalue(op: &dyn HermitianOperator, tol: f64, max_iters: usize, seed: u64) -> Result<f64> {
    power_iteration(op, tol, max_iters, seed, None).map(|e| e.value)
}

/// Analytic lower bound on the smallest eigenvalue: the operator's identity coefficient.
pub fn min_eigenvalue_bound(op: &dyn HermitianOperator) -> Result<f64> {
    let s = op.shift();
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::InvalidInterval {
            lambda_min: s,
            lambda_max: f64::NAN,
        })
    }
}

/// Options controlling spectral-interval estimation.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub safety: f64,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: POWER_TOL,
            max_iters: POWER_MAX_ITERS,
            safety: SPECTRAL_SAFETY,
            seed: 0,
        }
    }
}

/// Bracket the spectrum of `op`: `[shift, safety * power_estimate]`.
///
/// Returns the interval and the final power-iteration vector for warm starts.
pub fn estimate_spectral_interval(
    op: &dyn HermitianOperator,
    opts: &SpectralOptions,
    warm: Option<&CMat>,
) -> Result<(SpectralInterval, CMat)> {
    let lo = min_eigenvalue_bound(op)?;
    let est = power_iteration(op, opts.tol, opts.max_iters, opts.seed, warm)?;
    let hi = (opts.safety * est.value).max(lo);
    Ok((SpectralInterval::new(lo, hi)?, est.vector))
}

/// Materialize an operator column by column. Test and oracle use only.
pub fn assemble_dense(op: &dyn HermitianOperator) -> CMat {
    let n = op.dim();
    let mut out = CMat::zeros(n, n);
    let mut e = CMat::zeros(n, 1);
    for j in 0..n {
        e[(j, 0)] = Complex64::new(1.0, 0.0);
        let col = op.apply(&e);
        out.set_column(j, &col.column(0));
        e[(j, 0)] = Complex64::new(0.0, 0.0);
    }
    out
}

/// Eigenvalues of a dense Hermitian matrix in ascending order. Oracle use.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut h = a.clone();
    hermitianize(&mut h);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}
