//! Self-check oracles: exhaustive step-size search against the Chebyshev
//! schedule, and dense linear algebra against the matrix-free operators.

use fhmimo::fp::{build_qp, update_aux};
use fhmimo::linalg::{
    complex_gaussian, estimate_spectral_interval, hermitian_eigenvalues, hermitianize, logdet_hpd, solve_hpd,
    SpectralInterval, SpectralOptions,
};
use fhmimo::network::{generate_channels, random_precoders, SystemConfig};
use fhmimo::schedule::{
    brute_force_minimax, chebyshev_minimax_closed_form, chebyshev_schedule, minimax_value, residual_polynomial,
    BRUTE_FORCE_RESOLUTION,
};
use fhmimo::CMat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl OracleCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// `||grad_eta p(lambda)||_2` maximized over a grid of the interval: a local
/// Lipschitz constant of the sup-residual as a function of the steps.
pub fn residual_lipschitz(etas: &[f64], interval: &SpectralInterval) -> f64 {
    let n = 2001;
    let (lo, hi) = (interval.lambda_min, interval.lambda_max);
    (0..n)
        .map(|i| {
            let lam = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (0..etas.len())
                .map(|t| {
                    let others: Vec<f64> = etas
                        .iter()
                        .enumerate()
                        .filter(|&(s, _)| s != t)
                        .map(|(_, &e)| e)
                        .collect();
                    let g = lam * residual_polynomial(&others, lam);
                    g * g
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Allowed gap between the brute-force optimum and the true optimum:
/// twice the grid-cell diameter times the local Lipschitz constant.
pub fn grid_slack(etas: &[f64], interval: &SpectralInterval, grid_step: f64) -> f64 {
    2.0 * (etas.len() as f64).sqrt() * grid_step * residual_lipschitz(etas, interval)
}

/// Compare brute force with the Chebyshev schedule in both directions.
pub fn check_minimax(horizon: usize, interval: SpectralInterval, resolution: usize) -> OracleCheck {
    let name = format!(
        "minimax T={horizon} [{:.4}, {:.4}]",
        interval.lambda_min, interval.lambda_max
    );
    let cheb = match chebyshev_schedule(horizon, interval) {
        Ok(s) => s,
        Err(e) => return OracleCheck::new(name, false, e.to_string()),
    };
    let bf = match brute_force_minimax(horizon, interval, resolution) {
        Ok(b) => b,
        Err(e) => return OracleCheck::new(name, false, e.to_string()),
    };
    let vc = minimax_value(&cheb);
    let slack = grid_slack(&cheb.etas, &interval, bf.grid_step);
    // the Chebyshev value is optimal, so no grid point may beat it
    let lower = bf.value >= vc - 1e-12;
    let upper = bf.value <= vc + slack;
    OracleCheck::new(
        name,
        lower && upper,
        format!("brute {:.6e} chebyshev {vc:.6e} slack {slack:.2e}", bf.value),
    )
}

pub fn random_intervals(count: usize, seed: u64) -> Vec<SpectralInterval> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let lo = rng.random_range(0.1..5.0);
            let kappa = rng.random_range(1.2..6.0);
            SpectralInterval::new(lo, lo * kappa).expect("positive ordered interval")
        })
        .collect()
}

fn dense_checks(seed: u64) -> Vec<OracleCheck> {
    let mut out = Vec::new();
    let c = SystemConfig::new(2, 32, 2, 2, 3);
    let ch = match generate_channels(&c, seed) {
        Ok(ch) => ch,
        Err(e) => return vec![OracleCheck::new("channels", false, e.to_string())],
    };
    let v = random_precoders(&c, seed).expect("valid config");
    let aux = update_aux(&ch, &v).expect("nonzero precoders");
    for l in 0..c.num_cells {
        let Ok(qp) = build_qp(&ch, &aux, l) else { continue };
        let opts = SpectralOptions {
            seed,
            ..Default::default()
        };
        let name = format!("spectral interval seed={seed} cell={l}");
        match estimate_spectral_interval(&qp.d_op, &opts, None) {
            Ok((iv, _)) => {
                let ev = hermitian_eigenvalues(&qp.d_op.assemble_dense());
                let (lo, hi) = (ev[0], ev[ev.len() - 1]);
                let ok = lo >= iv.lambda_min * (1.0 - 1e-12) && hi <= iv.lambda_max;
                out.push(OracleCheck::new(
                    name,
                    ok,
                    format!("dense [{lo:.6e}, {hi:.6e}] estimate [{:.6e}, {:.6e}]", iv.lambda_min, iv.lambda_max),
                ));
            }
            Err(e) => out.push(OracleCheck::new(name, false, e.to_string())),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = complex_gaussian(24, 24, &mut rng);
    let mut a = b.adjoint() * &b + CMat::identity(24, 24) * Complex64::from(0.5);
    hermitianize(&mut a);
    let rhs = complex_gaussian(24, 3, &mut rng);
    let res = solve_hpd(&a, &rhs)
        .map(|x| (&a * x - &rhs).norm() / rhs.norm())
        .unwrap_or(f64::INFINITY);
    out.push(OracleCheck::new(
        format!("solve residual seed={seed}"),
        res < 1e-10,
        format!("{res:.2e}"),
    ));
    let via_eig: f64 = hermitian_eigenvalues(&a).iter().map(|l| l.log2()).sum();
    let ld = logdet_hpd(&a).unwrap_or(f64::NAN);
    out.push(OracleCheck::new(
        format!("logdet seed={seed}"),
        (ld - via_eig).abs() <= 1e-10 * via_eig.abs().max(1.0),
        format!("cholesky {ld:.12} eigen {via_eig:.12}"),
    ));
    out
}

/// All oracle checks run by the `oracle` subcommand.
pub fn run_oracles() -> Vec<OracleCheck> {
    let mut checks = Vec::new();
    let iv = SpectralInterval::new(1.0, 3.0).expect("valid");
    let v = chebyshev_minimax_closed_form(2, &iv);
    let m = chebyshev_schedule(2, iv).map(|s| minimax_value(&s)).unwrap_or(f64::NAN);
    checks.push(OracleCheck::new(
        "closed form T=2 [1, 3]",
        (v - 1.0 / 7.0).abs() < 1e-12 && (m - 1.0 / 7.0).abs() < 1e-12,
        format!("closed form {v:.15} schedule {m:.15}"),
    ));
    for horizon in 1..=3 {
        for iv in random_intervals(3, horizon as u64) {
            checks.push(check_minimax(horizon, iv, BRUTE_FORCE_RESOLUTION));
        }
    }
    for seed in 0..3 {
        checks.extend(dense_checks(seed));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_of_single_step() {
        // p = 1 - eta lambda, dp/deta = -lambda, max over [1, 3] is 3
        let iv = SpectralInterval::new(1.0, 3.0).unwrap();
        assert!((residual_lipschitz(&[0.5], &iv) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn minimax_check_passes_on_known_interval() {
        let c = check_minimax(2, SpectralInterval::new(1.0, 3.0).unwrap(), 401);
        assert!(c.passed, "{}", c.detail);
    }
}
