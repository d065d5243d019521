//! Fractional-programming reformulation.
//!
//! For fixed precoders `V` the Lagrangian dual transform introduces `Gamma`
//! and the quadratic transform introduces `Y`; both have closed-form optimal
//! updates that only need `N x N` solves. For fixed `(Gamma, Y)` the
//! surrogate is a concave quadratic in each `V_lk`, equivalent to
//! minimizing `tr(V^H D_l V / 2 - Re{V^H Q_lk})` with a cell-wide operator
//!
//! ```text
//! D_l = sum_{i,j} w_ij H_{ij,l}^H Y_ij (I + Gamma_ij) Y_ij^H H_{ij,l}
//!     + sum_j (w_lj sigma^2 / P) tr(Y_lj^H Y_lj (I + Gamma_lj)) I
//! ```
//!
//! which [`QuadraticProgram`] exposes matrix-free.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;

use crate::linalg::{self, hermitianize, inner, HermitianOperator, SpectralInterval, SpectralOptions};
use crate::network::{scaled_noise_level, ChannelSet, CrossTerms, PrecoderSet};
use crate::{CMat, Error, Result};

use std::f64::consts::LN_2;

/// Auxiliary variables, both indexed `l * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    /// `d x d` Hermitian PSD matrices.
    pub gamma: Vec<CMat>,
    /// `N x d` matrices.
    pub y: Vec<CMat>,
}

fn identity_plus(g: &CMat) -> CMat {
    CMat::identity(g.nrows(), g.ncols()) + g
}

/// `Gamma*_lk = S^H F~^{-1} S` with `S = H_{lk,l} V_lk`.
pub fn update_gamma(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<Vec<CMat>> {
    let cross = CrossTerms::new(channels, precoders)?;
    gamma_from(&cross, channels, precoders)
}

fn gamma_from(cross: &CrossTerms, channels: &ChannelSet, precoders: &PrecoderSet) -> Result<Vec<CMat>> {
    let c = &channels.config;
    let mut out = Vec::with_capacity(c.num_cells * c.users_per_cell);
    for l in 0..c.num_cells {
        let noise = scaled_noise_level(c, precoders, l)?;
        for k in 0..c.users_per_cell {
            let f = cross.covariance(l, k, noise);
            let s = cross.signal(l, k);
            let mut g = s.adjoint() * linalg::solve_hpd(&f, s)?;
            hermitianize(&mut g);
            out.push(g);
        }
    }
    Ok(out)
}

/// `J_lk = S S^H + F~_lk`.
fn j_matrix(cross: &CrossTerms, l: usize, k: usize, noise: f64) -> CMat {
    let s = cross.signal(l, k);
    let mut j = cross.covariance(l, k, noise);
    j.gemm(Complex64::from(1.0), s, &s.adjoint(), Complex64::from(1.0));
    hermitianize(&mut j);
    j
}

/// `Y*_lk = J_lk^{-1} S`. The optimum does not depend on `Gamma`.
pub fn update_y(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<Vec<CMat>> {
    let cross = CrossTerms::new(channels, precoders)?;
    y_from(&cross, channels, precoders)
}

fn y_from(cross: &CrossTerms, channels: &ChannelSet, precoders: &PrecoderSet) -> Result<Vec<CMat>> {
    let c = &channels.config;
    let mut out = Vec::with_capacity(c.num_cells * c.users_per_cell);
    for l in 0..c.num_cells {
        let noise = scaled_noise_level(c, precoders, l)?;
        for k in 0..c.users_per_cell {
            let j = j_matrix(cross, l, k, noise);
            out.push(linalg::solve_hpd(&j, cross.signal(l, k))?);
        }
    }
    Ok(out)
}

/// Both optimal auxiliary updates from one set of cross products.
pub fn update_aux(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<AuxState> {
    let cross = CrossTerms::new(channels, precoders)?;
    Ok(AuxState {
        gamma: gamma_from(&cross, channels, precoders)?,
        y: y_from(&cross, channels, precoders)?,
    })
}

fn check_aux_len(channels: &ChannelSet, len: usize) -> Result<()> {
    let want = channels.num_cells() * channels.users_per_cell();
    if len != want {
        return Err(Error::Shape(format!("expected {want} auxiliary matrices, got {len}")));
    }
    Ok(())
}

/// Lagrangian-dual surrogate `f_r(V, Gamma)`, in bits.
pub fn eval_fr(channels: &ChannelSet, precoders: &PrecoderSet, gamma: &[CMat]) -> Result<f64> {
    check_aux_len(channels, gamma.len())?;
    let cross = CrossTerms::new(channels, precoders)?;
    let c = &channels.config;
    let mut total = 0.0;
    for l in 0..c.num_cells {
        let noise = scaled_noise_level(c, precoders, l)?;
        for k in 0..c.users_per_cell {
            let g = &gamma[l * c.users_per_cell + k];
            let ig = identity_plus(g);
            let s = cross.signal(l, k);
            let j = j_matrix(&cross, l, k, noise);
            let quad = s.adjoint() * linalg::solve_hpd(&j, s)?;
            let term = linalg::logdet_hpd_nats(&ig)? - linalg::trace(g).re + linalg::trace(&(ig * quad)).re;
            total += c.weight(l, k) * term;
        }
    }
    Ok(total / LN_2)
}

/// Quadratic-transform surrogate `f_q(V, Gamma, Y)`, in bits.
pub fn eval_fq(channels: &ChannelSet, precoders: &PrecoderSet, gamma: &[CMat], y: &[CMat]) -> Result<f64> {
    check_aux_len(channels, gamma.len())?;
    check_aux_len(channels, y.len())?;
    let cross = CrossTerms::new(channels, precoders)?;
    let c = &channels.config;
    let mut total = 0.0;
    for l in 0..c.num_cells {
        let noise = scaled_noise_level(c, precoders, l)?;
        for k in 0..c.users_per_cell {
            let idx = l * c.users_per_cell + k;
            let (g, yk) = (&gamma[idx], &y[idx]);
            let ig = identity_plus(g);
            let s = cross.signal(l, k);
            let j = j_matrix(&cross, l, k, noise);
            let linear = 2.0 * linalg::trace(&(s.adjoint() * yk * &ig)).re;
            let quad = linalg::trace(&(yk.adjoint() * j * yk * &ig)).re;
            let term = linalg::logdet_hpd_nats(&ig)? - linalg::trace(g).re + linear - quad;
            total += c.weight(l, k) * term;
        }
    }
    Ok(total / LN_2)
}

struct Term<'a> {
    h: &'a CMat,
    /// `w Y (I + Gamma) Y^H`, `N x N`.
    a: CMat,
}

/// Matrix-free `D_l`: `X -> sum_t H_t^H (A_t (H_t X)) + shift X`.
///
/// Never forms an `M x M` matrix; one application to an `M x c` block costs
/// `O(L K N M c)`. Counts complex multiply-adds performed by `apply`.
pub struct DOperator<'a> {
    dim: usize,
    terms: Vec<Term<'a>>,
    shift: f64,
    ops: AtomicU64,
}

impl DOperator<'_> {
    /// Complex multiply-adds performed by `apply` since construction or the last reset.
    pub fn op_count(&self) -> u64 {
        self.ops.load(Ordering::Relaxed)
    }

    pub fn reset_op_count(&self) {
        self.ops.store(0, Ordering::Relaxed);
    }

    /// Dense `M x M` assembly from the factored terms. Exact solver and tests only.
    pub fn assemble_dense(&self) -> CMat {
        let mut d = CMat::identity(self.dim, self.dim) * Complex64::from(self.shift);
        for t in &self.terms {
            let ah = &t.a * t.h;
            d.gemm_ad(Complex64::from(1.0), t.h, &ah, Complex64::from(1.0));
        }
        hermitianize(&mut d);
        d
    }
}

impl HermitianOperator for DOperator<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &CMat) -> CMat {
        let c = x.ncols() as u64;
        let mut out = x * Complex64::from(self.shift);
        let mut ops = self.dim as u64 * c;
        for t in &self.terms {
            let n = t.h.nrows() as u64;
            let hx = t.h * x;
            let ahx = &t.a * hx;
            out.gemm_ad(Complex64::from(1.0), t.h, &ahx, Complex64::from(1.0));
            ops += 2 * n * self.dim as u64 * c + n * n * c;
        }
        self.ops.fetch_add(ops, Ordering::Relaxed);
        out
    }

    fn shift(&self) -> f64 {
        self.shift
    }
}

/// Per-cell quadratic program: minimize `tr(V^H D V / 2 - Re{V^H Q_k})` for each user `k`.
pub struct QuadraticProgram<'a> {
    pub cell: usize,
    pub d_op: DOperator<'a>,
    /// Right-hand sides `Q_lk`, one per user of the cell.
    pub q: Vec<CMat>,
    /// Spectral interval of `d_op`, once estimated.
    pub spectral: Option<SpectralInterval>,
}

/// Assemble cell `l`'s quadratic program from the auxiliary variables.
pub fn build_qp<'a>(channels: &'a ChannelSet, aux: &AuxState, l: usize) -> Result<QuadraticProgram<'a>> {
    let c = &channels.config;
    check_aux_len(channels, aux.gamma.len())?;
    check_aux_len(channels, aux.y.len())?;
    if l >= c.num_cells {
        return Err(Error::Shape(format!("no cell {l}")));
    }
    let mut terms = Vec::with_capacity(c.num_cells * c.users_per_cell);
    let mut shift = 0.0;
    let mut q = Vec::with_capacity(c.users_per_cell);
    for i in 0..c.num_cells {
        for j in 0..c.users_per_cell {
            let idx = i * c.users_per_cell + j;
            let (y, ig) = (&aux.y[idx], identity_plus(&aux.gamma[idx]));
            let w = c.weight(i, j);
            let yig = y * &ig;
            if i == l {
                // tr(Y^H Y (I + Gamma)) = tr(Y (I + Gamma) Y^H)
                shift += w * c.noise_power / c.power_budget * inner(y, &yig);
                q.push(channels.h(l, j, l).ad_mul(&yig) * Complex64::from(w));
            }
            if y.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            let mut a = &yig * y.adjoint() * Complex64::from(w);
            hermitianize(&mut a);
            terms.push(Term { h: channels.h(i, j, l), a });
        }
    }
    if !(shift > 0.0) {
        return Err(Error::DegenerateOperator { cell: l });
    }
    Ok(QuadraticProgram {
        cell: l,
        d_op: DOperator {
            dim: c.tx_antennas,
            terms,
            shift,
            ops: AtomicU64::new(0),
        },
        q,
        spectral: None,
    })
}

impl QuadraticProgram<'_> {
    /// `D V - Q_k`.
    pub fn gradient(&self, v: &CMat, k: usize) -> CMat {
        self.d_op.apply(v) - &self.q[k]
    }

    /// `tr(V^H D V / 2 - Re{V^H Q_k})`.
    pub fn objective(&self, v: &CMat, k: usize) -> f64 {
        0.5 * inner(v, &self.d_op.apply(v)) - inner(v, &self.q[k])
    }

    /// Estimate and store the spectral interval. Returns the power-iteration
    /// vector for warm-starting the next estimate.
    pub fn estimate_spectrum(&mut self, opts: &SpectralOptions, warm: Option<&CMat>) -> Result<CMat> {
        let (iv, vec) = linalg::estimate_spectral_interval(&self.d_op, opts, warm)?;
        self.spectral = Some(iv);
        Ok(vec)
    }
}
