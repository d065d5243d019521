//! Outer block-ascent loops.
//!
//! Every variant alternates `Gamma* -> Y* -> V` and differs only in the `V`
//! block: an exact dense solve of `D_l V = Q_lk` ([`Variant::ExactWmmse`]),
//! or exactly `T` warm-started gradient steps with Chebyshev
//! ([`Variant::FiniteHorizon`]) or constant ([`Variant::ConstantGd`]) step
//! sizes. The loop is written for `L` cells; the single-cell algorithm is the
//! `L = 1` case. The returned precoders are rescaled per cell onto the power
//! budget and traces report the weighted sum rate of those rescaled precoders.

use std::fmt;
use std::time::Instant;

use nalgebra::Cholesky;

use crate::fp::{self, QuadraticProgram};
use crate::linalg::{HermitianOperator, SpectralInterval, SpectralOptions};
use crate::network::{self, ChannelSet, PrecoderSet};
use crate::schedule::{self, StepSchedule};
use crate::{CMat, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    ExactWmmse,
    FiniteHorizon,
    ConstantGd,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ExactWmmse => "exact_wmmse",
            Variant::FiniteHorizon => "finite_horizon",
            Variant::ConstantGd => "constant_gd",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralRefresh {
    /// Re-estimate the interval of `D_l` every outer iteration.
    EveryOuter,
    /// Estimate once per cell and reuse (ablation; the interval may stop bracketing `D_l`).
    Once,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub horizon: usize,
    pub max_outer_iters: usize,
    pub rel_tol: f64,
    /// Seeds the initial precoders and the power-iteration start vectors.
    pub seed: u64,
    pub spectral_refresh: SpectralRefresh,
    /// Stop after the first outer iteration that ends past this wall-clock budget.
    pub time_budget_seconds: Option<f64>,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub spectral_safety: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FiniteHorizon,
            horizon: 5,
            max_outer_iters: 200,
            rel_tol: 1e-5,
            seed: 0,
            spectral_refresh: SpectralRefresh::EveryOuter,
            time_budget_seconds: None,
            power_tol: crate::linalg::POWER_TOL,
            power_max_iters: crate::linalg::POWER_MAX_ITERS,
            spectral_safety: crate::linalg::SPECTRAL_SAFETY,
        }
    }
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be positive".into()));
        }
        if !(self.spectral_safety >= 1.0) {
            return Err(Error::InvalidConfig("spectral safety factor must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub outer_iteration: usize,
    /// Set only for inner-loop traces.
    pub inner_iteration: Option<usize>,
    pub cumulative_seconds: f64,
    pub wsr_bits: f64,
    pub inner_objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(record.cumulative_seconds >= last.cumulative_seconds);
        }
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_wsr(&self) -> Option<f64> {
        self.records.last().map(|r| r.wsr_bits)
    }

    pub fn wsr_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wsr_bits).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// Power-normalized precoders.
    pub precoders: PrecoderSet,
    /// Precoders before the final normalization.
    pub raw_precoders: PrecoderSet,
    pub trace: IterationTrace,
    pub outer_iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SolverError {
    pub source: Error,
    /// Records collected before the failure.
    pub trace: IterationTrace,
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} trace records)", self.source, self.trace.len())
    }
}

impl std::error::Error for SolverError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// State visible to an inner-loop observer, after the `V` update of one user.
pub struct InnerProbe<'p, 'a> {
    pub outer_iteration: usize,
    pub cell: usize,
    pub user: usize,
    pub qp: &'p QuadraticProgram<'a>,
    /// `None` for the exact solve.
    pub schedule: Option<&'p StepSchedule>,
    pub v_start: &'p CMat,
    pub v_end: &'p CMat,
}

/// Run `schedule.horizon()` gradient steps `V <- V - eta_t (D V - Q_k)` from `v0`.
pub fn solve_qp_finite_horizon(qp: &QuadraticProgram<'_>, k: usize, v0: &CMat, schedule: &StepSchedule) -> CMat {
    gradient_steps(&qp.d_op, &qp.q[k], v0, &schedule.etas, |_, _| {})
}

/// Gradient steps on `tr(V^H D V / 2 - Re{V^H Q})`, calling `visit(t, V^t)`
/// for `t = 1..=T` after each step.
pub fn gradient_steps<F>(op: &dyn HermitianOperator, q: &CMat, v0: &CMat, etas: &[f64], mut visit: F) -> CMat
where
    F: FnMut(usize, &CMat),
{
    let mut v = v0.clone();
    for (t, &eta) in etas.iter().enumerate() {
        let mut grad = op.apply(&v);
        grad -= q;
        v.zip_apply(&grad, |a, g| *a -= g * eta);
        visit(t + 1, &v);
    }
    v
}

/// Exact solution `V_k = D^{-1} Q_k` for every user of the cell via a dense
/// `M x M` Cholesky factorization.
pub fn solve_qp_exact(qp: &QuadraticProgram<'_>) -> Result<Vec<CMat>> {
    let d = qp.d_op.assemble_dense();
    let chol = Cholesky::new(d).ok_or(Error::NotPositiveDefinite { context: "exact V update" })?;
    Ok(qp.q.iter().map(|q| chol.solve(q)).collect())
}

pub fn run_exact_wmmse(channels: &ChannelSet, config: &SolverConfig) -> std::result::Result<SolverOutput, SolverError> {
    run_solver(channels, &SolverConfig { variant: Variant::ExactWmmse, ..config.clone() })
}

pub fn run_finite_horizon(channels: &ChannelSet, config: &SolverConfig) -> std::result::Result<SolverOutput, SolverError> {
    run_solver(channels, &SolverConfig { variant: Variant::FiniteHorizon, ..config.clone() })
}

pub fn run_constant_gd(channels: &ChannelSet, config: &SolverConfig) -> std::result::Result<SolverOutput, SolverError> {
    run_solver(channels, &SolverConfig { variant: Variant::ConstantGd, ..config.clone() })
}

/// Run the variant named in `config` from the seeded random initialization.
pub fn run_solver(channels: &ChannelSet, config: &SolverConfig) -> std::result::Result<SolverOutput, SolverError> {
    run_solver_with(channels, config, None, &mut |_| {})
}

/// Full-control entry point: optional initial precoders and an observer
/// called after every per-user `V` update.
pub fn run_solver_with(
    channels: &ChannelSet,
    config: &SolverConfig,
    init: Option<PrecoderSet>,
    probe: &mut dyn FnMut(&InnerProbe<'_, '_>),
) -> std::result::Result<SolverOutput, SolverError> {
    let mut trace = IterationTrace::default();
    let fail = |source: Error, trace: &IterationTrace| SolverError {
        source,
        trace: trace.clone(),
    };
    config.validate().map_err(|e| fail(e, &trace))?;

    let start = Instant::now();
    let c = &channels.config;
    let mut v = match init {
        Some(v) => v,
        None => network::random_precoders(c, config.seed).map_err(|e| fail(e, &trace))?,
    };
    let mut wsr = achieved_wsr(channels, &v).map_err(|e| fail(e, &trace))?;
    trace.push(TraceRecord {
        outer_iteration: 0,
        inner_iteration: None,
        cumulative_seconds: start.elapsed().as_secs_f64(),
        wsr_bits: wsr,
        inner_objective: None,
    });

    let spectral_opts = |cell: usize| SpectralOptions {
        tol: config.power_tol,
        max_iters: config.power_max_iters,
        safety: config.spectral_safety,
        seed: config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(cell as u64),
    };
    let mut warm: Vec<Option<CMat>> = vec![None; c.num_cells];
    let mut cached: Vec<Option<SpectralInterval>> = vec![None; c.num_cells];

    let mut converged = false;
    let mut outer = 0;
    while outer < config.max_outer_iters {
        outer += 1;
        let aux = fp::update_aux(channels, &v).map_err(|e| fail(e, &trace))?;
        let mut next = v.clone();
        for l in 0..c.num_cells {
            let mut qp = match fp::build_qp(channels, &aux, l) {
                Ok(qp) => qp,
                // No signal reaches any user of this cell: every V_l is stationary.
                Err(Error::DegenerateOperator { .. }) => continue,
                Err(e) => return Err(fail(e, &trace)),
            };
            match config.variant {
                Variant::ExactWmmse => {
                    let sol = solve_qp_exact(&qp).map_err(|e| fail(e, &trace))?;
                    for (k, vk) in sol.into_iter().enumerate() {
                        probe(&InnerProbe {
                            outer_iteration: outer,
                            cell: l,
                            user: k,
                            qp: &qp,
                            schedule: None,
                            v_start: v.get(l, k),
                            v_end: &vk,
                        });
                        next.set(l, k, vk);
                    }
                }
                Variant::FiniteHorizon | Variant::ConstantGd => {
                    let interval = match (config.spectral_refresh, cached[l]) {
                        (SpectralRefresh::Once, Some(iv)) => iv,
                        _ => {
                            let vec = qp
                                .estimate_spectrum(&spectral_opts(l), warm[l].as_ref())
                                .map_err(|e| fail(e, &trace))?;
                            warm[l] = Some(vec);
                            let iv = qp.spectral.expect("just estimated");
                            cached[l] = Some(iv);
                            iv
                        }
                    };
                    qp.spectral = Some(interval);
                    let sched = match config.variant {
                        Variant::FiniteHorizon => schedule::chebyshev_schedule(config.horizon, interval),
                        _ => schedule::constant_schedule(config.horizon, interval),
                    }
                    .map_err(|e| fail(e, &trace))?;
                    for k in 0..c.users_per_cell {
                        let v0 = v.get(l, k);
                        let vt = solve_qp_finite_horizon(&qp, k, v0, &sched);
                        probe(&InnerProbe {
                            outer_iteration: outer,
                            cell: l,
                            user: k,
                            qp: &qp,
                            schedule: Some(&sched),
                            v_start: v0,
                            v_end: &vt,
                        });
                        next.set(l, k, vt);
                    }
                }
            }
        }
        v = next;
        let new_wsr = achieved_wsr(channels, &v).map_err(|e| fail(e, &trace))?;
        let elapsed = start.elapsed().as_secs_f64();
        trace.push(TraceRecord {
            outer_iteration: outer,
            inner_iteration: None,
            cumulative_seconds: elapsed,
            wsr_bits: new_wsr,
            inner_objective: None,
        });
        let delta = (new_wsr - wsr).abs();
        wsr = new_wsr;
        if delta <= config.rel_tol * wsr.abs() {
            converged = true;
            break;
        }
        if config.time_budget_seconds.is_some_and(|b| elapsed >= b) {
            break;
        }
    }

    let precoders = network::power_normalize(&v, c).map_err(|e| fail(e, &trace))?;
    Ok(SolverOutput {
        precoders,
        raw_precoders: v,
        trace,
        outer_iters: outer,
        converged,
    })
}

/// Weighted sum rate of the per-cell power-normalized precoders. Equals
/// `objective_g(v)` for a single cell; with several cells the per-cell
/// rescaling changes the inter-cell interference and the two can differ.
pub fn achieved_wsr(channels: &ChannelSet, v: &PrecoderSet) -> Result<f64> {
    network::wsr(channels, &network::power_normalize(v, &channels.config)?)
}
