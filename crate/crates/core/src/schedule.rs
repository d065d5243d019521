//! Finite-horizon step-size schedules for gradient descent on an HPD quadratic.
//!
//! After `T` steps with sizes `eta_t` the error is `prod_t (I - eta_t D)`
//! applied to the initial error, so the worst case over a spectral interval
//! `[lambda_1, lambda_M]` is the sup of `|prod_t (1 - eta_t lambda)|`. Placing
//! the reciprocals `1 / eta_t` at the Chebyshev nodes mapped onto the
//! interval makes that residual polynomial a scaled Chebyshev polynomial,
//! which minimizes the sup among all degree-`T` polynomials equal to one at
//! `lambda = 0`.

use std::f64::consts::PI;

use crate::linalg::SpectralInterval;
use crate::{Error, Result};

/// Points of the uniform grid used by [`minimax_value`].
pub const MINIMAX_GRID: usize = 10_001;

/// Default per-axis resolution of [`brute_force_minimax`].
pub const BRUTE_FORCE_RESOLUTION: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Chebyshev,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub interval: SpectralInterval,
    /// Step sizes in application order.
    pub etas: Vec<f64>,
}

impl StepSchedule {
    pub fn horizon(&self) -> usize {
        self.etas.len()
    }

    /// Right-hand contraction factor of the bound that applies to this schedule:
    /// `(1 - 2/(kappa+1))^T` for constant steps, `2 (1 - 2/(sqrt(kappa)+1))^T` for Chebyshev steps.
    pub fn predicted_factor(&self) -> f64 {
        predicted_factor(self.kind, self.interval.kappa(), self.horizon())
    }
}

pub fn predicted_factor(kind: ScheduleKind, kappa: f64, horizon: usize) -> f64 {
    let t = horizon as i32;
    match kind {
        ScheduleKind::Constant => (1.0 - 2.0 / (kappa + 1.0)).powi(t),
        ScheduleKind::Chebyshev => 2.0 * (1.0 - 2.0 / (kappa.sqrt() + 1.0)).powi(t),
    }
}

/// Roots of `cos(T arccos x)`: `xi_t = cos((t + 1/2) pi / T)`, strictly decreasing.
///
/// Computed on the first half and mirrored so the set is exactly symmetric
/// and the middle node of an odd horizon is exactly zero.
pub fn chebyshev_nodes(horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let tf = horizon as f64;
    let mut xi = vec![0.0; horizon];
    for t in 0..horizon / 2 {
        let x = ((t as f64 + 0.5) * PI / tf).cos();
        xi[t] = x;
        xi[horizon - 1 - t] = -x;
    }
    Ok(xi)
}

/// Degree-`T` Chebyshev polynomial of the first kind, valid on the whole real line.
pub fn chebyshev_t(horizon: usize, x: f64) -> f64 {
    let t = horizon as f64;
    if x.abs() <= 1.0 {
        (t * x.acos()).cos()
    } else if x > 1.0 {
        (t * x.acosh()).cosh()
    } else {
        let s = if horizon.is_multiple_of(2) { 1.0 } else { -1.0 };
        s * (t * (-x).acosh()).cosh()
    }
}

fn step_for_node(interval: &SpectralInterval, node: f64) -> f64 {
    let mid = 0.5 * (interval.lambda_max + interval.lambda_min);
    let half = 0.5 * (interval.lambda_max - interval.lambda_min);
    1.0 / (mid + half * node)
}

/// Minimax-optimal schedule: `eta_t = 1 / ((l_M + l_1)/2 + (l_M - l_1)/2 xi_t)`.
///
/// The steps are applied in the Leja order of their nodes. Any order gives
/// the same residual polynomial, but in the natural order the trailing large
/// steps amplify earlier rounding errors by up to `~kappa^(T/2)`, which
/// destroys the iterate once `T` reaches a few dozen.
pub fn chebyshev_schedule(horizon: usize, interval: SpectralInterval) -> Result<StepSchedule> {
    let interval = SpectralInterval::new(interval.lambda_min, interval.lambda_max)?;
    let nodes = chebyshev_nodes(horizon)?;
    let etas = leja_order(&nodes)
        .into_iter()
        .map(|t| step_for_node(&interval, nodes[t]))
        .collect();
    Ok(StepSchedule {
        kind: ScheduleKind::Chebyshev,
        interval,
        etas,
    })
}

/// Greedy Leja ordering: start from the node of largest magnitude, then
/// repeatedly take the node maximizing the product of distances to those
/// already taken. Ties keep the lower index.
pub fn leja_order(nodes: &[f64]) -> Vec<usize> {
    let mut order = Vec::with_capacity(nodes.len());
    let mut score = vec![0.0f64; nodes.len()];
    let mut used = vec![false; nodes.len()];
    let mut next = 0;
    for (i, x) in nodes.iter().enumerate() {
        if x.abs() > nodes[next].abs() {
            next = i;
        }
    }
    while order.len() < nodes.len() {
        used[next] = true;
        order.push(next);
        let picked = nodes[next];
        let mut best: Option<usize> = None;
        for i in 0..nodes.len() {
            if used[i] {
                continue;
            }
            score[i] += (nodes[i] - picked).abs().ln();
            if best.is_none_or(|b| score[i] > score[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    order
}

/// Best identical step `2 / (l_1 + l_M)`, repeated `T` times.
pub fn constant_schedule(horizon: usize, interval: SpectralInterval) -> Result<StepSchedule> {
    let interval = SpectralInterval::new(interval.lambda_min, interval.lambda_max)?;
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let eta = step_for_node(&interval, 0.0);
    Ok(StepSchedule {
        kind: ScheduleKind::Constant,
        interval,
        etas: vec![eta; horizon],
    })
}

/// Residual polynomial `prod_t (1 - eta_t lambda)`.
pub fn residual_polynomial(etas: &[f64], lambda: f64) -> f64 {
    etas.iter().map(|e| 1.0 - e * lambda).product()
}

fn residual_derivative(etas: &[f64], lambda: f64) -> f64 {
    (0..etas.len())
        .map(|t| {
            -etas[t]
                * etas
                    .iter()
                    .enumerate()
                    .filter(|&(s, _)| s != t)
                    .map(|(_, e)| 1.0 - e * lambda)
                    .product::<f64>()
        })
        .sum()
}

/// `sup_{l_1 <= lambda <= l_M} |prod_t (1 - eta_t lambda)|`.
///
/// Evaluated on a uniform grid, the endpoints, the mapped Chebyshev extrema
/// and every sign change of the derivative between grid points (refined by
/// bisection). The Chebyshev extrema make the value exact for Chebyshev
/// schedules; the stationary points make it exact for smooth cases in general.
pub fn sup_residual(etas: &[f64], interval: &SpectralInterval) -> f64 {
    let (lo, hi) = (interval.lambda_min, interval.lambda_max);
    let eval = |lam: f64| residual_polynomial(etas, lam).abs();
    if hi == lo {
        return eval(lo);
    }
    let mut best = eval(lo).max(eval(hi));

    let t = etas.len();
    for j in 1..t {
        let x = (j as f64 * PI / t as f64).cos();
        let lam = 0.5 * (hi + lo) - 0.5 * (hi - lo) * x;
        best = best.max(eval(lam));
    }

    let n = MINIMAX_GRID;
    let step = (hi - lo) / (n - 1) as f64;
    let mut prev_lam = lo;
    let mut prev_d = residual_derivative(etas, lo);
    for i in 1..n {
        let lam = if i == n - 1 { hi } else { lo + step * i as f64 };
        best = best.max(eval(lam));
        let d = residual_derivative(etas, lam);
        if prev_d == 0.0 {
            best = best.max(eval(prev_lam));
        } else if prev_d.signum() != d.signum() && d != 0.0 {
            let (mut a, mut b, mut fa) = (prev_lam, lam, prev_d);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let fm = residual_derivative(etas, m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            best = best.max(eval(0.5 * (a + b)));
        }
        prev_lam = lam;
        prev_d = d;
    }
    best
}

/// Worst-case residual factor of a schedule over its own interval.
pub fn minimax_value(schedule: &StepSchedule) -> f64 {
    sup_residual(&schedule.etas, &schedule.interval)
}

/// Closed-form optimum `1 / |T_T(gamma)|`, `gamma = (l_M + l_1) / (l_M - l_1)`.
pub fn chebyshev_minimax_closed_form(horizon: usize, interval: &SpectralInterval) -> f64 {
    if interval.lambda_max == interval.lambda_min {
        return 0.0;
    }
    let gamma = (interval.lambda_max + interval.lambda_min) / (interval.lambda_max - interval.lambda_min);
    1.0 / chebyshev_t(horizon, gamma).abs()
}

/// Outcome of the exhaustive step-size search.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub value: f64,
    pub etas: Vec<f64>,
    /// Spacing of the per-axis grid.
    pub grid_step: f64,
}

/// Exact sup of `|p|` on `[lo, hi]` for a residual polynomial of degree <= 3,
/// using the closed-form roots of the derivative.
fn sup_low_degree(etas: &[f64], lo: f64, hi: f64) -> f64 {
    let eval = |lam: f64| residual_polynomial(etas, lam).abs();
    let mut best = eval(lo).max(eval(hi));
    // p(l) = 1 - e1 l + e2 l^2 - e3 l^3
    let (e1, e2, e3) = match *etas {
        [a] => (a, 0.0, 0.0),
        [a, b] => (a + b, a * b, 0.0),
        [a, b, c] => (a + b + c, a * b + b * c + a * c, a * b * c),
        _ => unreachable!("degree checked by caller"),
    };
    // p'(l) = -e1 + 2 e2 l - 3 e3 l^2
    let mut consider = |lam: f64| {
        if lam > lo && lam < hi {
            best = best.max(eval(lam));
        }
    };
    if e3 != 0.0 {
        let (a, b, c) = (-3.0 * e3, 2.0 * e2, -e1);
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            consider((-b + sq) / (2.0 * a));
            consider((-b - sq) / (2.0 * a));
        }
    } else if e2 != 0.0 {
        consider(e1 / (2.0 * e2));
    }
    best
}

/// Exhaustive search over step tuples on a `resolution`-point grid per axis
/// covering `[0, 2 / l_1]`. Because the objective is symmetric in the steps,
/// only non-decreasing tuples are visited. Horizons 1 to 3 only.
pub fn brute_force_minimax(horizon: usize, interval: SpectralInterval, resolution: usize) -> Result<BruteForceResult> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    if horizon > 3 {
        return Err(Error::HorizonTooLarge(horizon));
    }
    let interval = SpectralInterval::new(interval.lambda_min, interval.lambda_max)?;
    let (lo, hi) = (interval.lambda_min, interval.lambda_max);
    let res = resolution.max(2);
    let h = 2.0 / lo / (res - 1) as f64;
    let grid: Vec<f64> = (0..res).map(|i| h * i as f64).collect();

    let mut best = BruteForceResult {
        value: f64::INFINITY,
        etas: vec![],
        grid_step: h,
    };
    let mut visit = |etas: &[f64]| {
        let v = sup_low_degree(etas, lo, hi);
        if v < best.value {
            best.value = v;
            best.etas = etas.to_vec();
        }
    };
    match horizon {
        1 => grid.iter().for_each(|&a| visit(&[a])),
        2 => {
            for i in 0..res {
                for j in i..res {
                    visit(&[grid[i], grid[j]]);
                }
            }
        }
        _ => {
            for i in 0..res {
                for j in i..res {
                    for k in j..res {
                        visit(&[grid[i], grid[j], grid[k]]);
                    }
                }
            }
        }
    }
    Ok(best)
}
