use fhmimo::fp;
use fhmimo::linalg::{complex_gaussian, hermitian_eigenvalues, hermitianize, solve_hpd, DenseOperator, SpectralInterval};
use fhmimo::network::{self, generate_channels, objective_g, wsr, ChannelSet, PrecoderSet, SystemConfig};
use fhmimo::schedule::{chebyshev_schedule, constant_schedule};
use fhmimo::solvers::{
    gradient_steps, run_exact_wmmse, run_finite_horizon, run_solver_with, SolverConfig, Variant,
};
use fhmimo::CMat;
use nalgebra::SVD;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk(seed: u64) -> ChannelSet {
    generate_channels(&SystemConfig::new(1, 32, 2, 2, 3), seed).unwrap()
}

fn tight(variant: Variant, horizon: usize) -> SolverConfig {
    SolverConfig {
        variant,
        horizon,
        max_outer_iters: 40_000,
        rel_tol: 1e-13,
        ..Default::default()
    }
}

fn random_direction(v: &PrecoderSet, rng: &mut ChaCha8Rng) -> PrecoderSet {
    let blocks = v
        .as_slice()
        .iter()
        .map(|b| complex_gaussian(b.nrows(), b.ncols(), rng))
        .collect();
    PrecoderSet::new(v.num_cells(), v.users_per_cell(), blocks).unwrap()
}

fn axpy(v: &PrecoderSet, dir: &PrecoderSet, t: f64) -> PrecoderSet {
    let blocks = v
        .as_slice()
        .iter()
        .zip(dir.as_slice())
        .map(|(a, b)| a + b * Complex64::from(t))
        .collect();
    PrecoderSet::new(v.num_cells(), v.users_per_cell(), blocks).unwrap()
}

/// Largest central-difference directional derivative of `g` over random
/// directions with the same Frobenius norm as `v`.
fn max_directional_derivative(ch: &ChannelSet, v: &PrecoderSet, dirs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = v.as_slice().iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
    (0..dirs)
        .map(|_| {
            let d = random_direction(v, &mut rng);
            let n: f64 = d.as_slice().iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
            let d = d.scaled(Complex64::from(scale / n));
            let gp = objective_g(ch, &axpy(v, &d, 1e-6)).unwrap();
            let gm = objective_g(ch, &axpy(v, &d, -1e-6)).unwrap();
            ((gp - gm) / 2e-6).abs()
        })
        .fold(0.0, f64::max)
}

/// Per-user unitary Procrustes alignment of `a` onto `b`; returns `||aU - b|| / ||b||`.
fn aligned_distance(a: &PrecoderSet, b: &PrecoderSet) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let svd = SVD::new(x.adjoint() * y, true, true);
        let u = svd.u.unwrap() * svd.v_t.unwrap();
        num += (x * u - y).norm_squared();
        den += y.norm_squared();
    }
    (num / den).sqrt()
}

#[test]
fn exact_stationarity_at_convergence() {
    for seed in 0..3 {
        let ch = desk(seed);
        let out = run_exact_wmmse(&ch, &tight(Variant::ExactWmmse, 1)).unwrap();
        assert!(out.converged);
        let g = objective_g(&ch, &out.precoders).unwrap();
        let dd = max_directional_derivative(&ch, &out.precoders, 20, seed);
        assert!(dd < 1e-4 * g, "seed {seed}: {dd} vs {g}");
    }
}

#[test]
fn finite_horizon_stationarity_at_convergence() {
    let ch = desk(0);
    let out = run_finite_horizon(&ch, &tight(Variant::FiniteHorizon, 50)).unwrap();
    let g = objective_g(&ch, &out.precoders).unwrap();
    let dd = max_directional_derivative(&ch, &out.precoders, 20, 7);
    assert!(dd < 1e-4 * g, "{dd} vs {g}");
}

#[test]
fn long_horizon_matches_exact_fixed_point() {
    let ch = desk(0);
    let ex = run_exact_wmmse(&ch, &tight(Variant::ExactWmmse, 1)).unwrap();
    let fh = run_finite_horizon(&ch, &tight(Variant::FiniteHorizon, 200)).unwrap();
    let (we, wf) = (ex.trace.last_wsr().unwrap(), fh.trace.last_wsr().unwrap());
    assert!((we - wf).abs() < 1e-3 * we, "{we} vs {wf}");
    let dist = aligned_distance(&fh.precoders, &ex.precoders);
    assert!(dist < 1e-4, "{dist}");
}

#[test]
fn normalized_output_matches_objective_single_cell() {
    for seed in 0..5 {
        let ch = desk(seed);
        for variant in [Variant::ExactWmmse, Variant::FiniteHorizon, Variant::ConstantGd] {
            let out = run_solver_with(&ch, &SolverConfig { max_outer_iters: 8, ..SolverConfig::new(variant) }, None, &mut |_| {})
                .unwrap();
            let g = objective_g(&ch, &out.raw_precoders).unwrap();
            assert!((wsr(&ch, &out.precoders).unwrap() - g).abs() < 1e-9 * g);
        }
    }
}

#[test]
fn single_cell_reduction_is_bit_identical() {
    for seed in 0..3 {
        let ch = desk(seed);
        let h: Vec<CMat> = (0..3).map(|k| ch.h(0, k, 0).clone()).collect();
        let single = ChannelSet::single_cell(ch.config.clone(), h).unwrap();
        for variant in [Variant::ExactWmmse, Variant::FiniteHorizon] {
            let cfg = SolverConfig { max_outer_iters: 20, seed, ..SolverConfig::new(variant) };
            let a = run_solver_with(&ch, &cfg, None, &mut |_| {}).unwrap();
            let b = run_solver_with(&single, &cfg, None, &mut |_| {}).unwrap();
            assert_eq!(a.trace.wsr_values(), b.trace.wsr_values());
            assert_eq!(a.precoders, b.precoders);
        }
    }
}

fn random_hpd(dim: usize, rng: &mut ChaCha8Rng) -> CMat {
    let b = complex_gaussian(dim, dim, rng);
    let mut d = b.adjoint() * &b + CMat::identity(dim, dim) * Complex64::from(rng.random_range(0.01..2.0));
    hermitianize(&mut d);
    d
}

#[test]
fn contraction_bounds_hold_on_random_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let dim = rng.random_range(16..=64);
        let d = random_hpd(dim, &mut rng);
        let ev = hermitian_eigenvalues(&d);
        let iv = SpectralInterval::new(ev[0], ev[dim - 1]).unwrap();
        let q = complex_gaussian(dim, 2, &mut rng);
        let vstar = solve_hpd(&d, &q).unwrap();
        let v0 = complex_gaussian(dim, 2, &mut rng);
        let e0 = (&v0 - &vstar).norm();
        let op = DenseOperator::new(d, 0.0);
        for t in [1, 3, 5, 7] {
            for s in [chebyshev_schedule(t, iv).unwrap(), constant_schedule(t, iv).unwrap()] {
                let v = gradient_steps(&op, &q, &v0, &s.etas, |_, _| {});
                let ratio = (v - &vstar).norm() / e0;
                assert!(ratio <= s.predicted_factor() * (1.0 + 1e-10), "{:?} T={t}: {ratio}", s.kind);
            }
        }
    }
}

#[test]
fn many_gradient_steps_agree_with_dense_solve() {
    let c = SystemConfig::new(2, 12, 2, 1, 2);
    for seed in 0..5 {
        let ch = generate_channels(&c, seed).unwrap();
        let v = network::random_precoders(&c, seed).unwrap();
        let aux = fp::update_aux(&ch, &v).unwrap();
        let qp = fp::build_qp(&ch, &aux, 0).unwrap();
        let d = qp.d_op.assemble_dense();
        let ev = hermitian_eigenvalues(&d);
        let iv = SpectralInterval::new(ev[0], ev[ev.len() - 1]).unwrap();
        let s = chebyshev_schedule(8, iv).unwrap();
        for k in 0..2 {
            let exact = solve_hpd(&d, &qp.q[k]).unwrap();
            let mut x = CMat::zeros(12, 1);
            for _ in 0..400 {
                x = gradient_steps(&qp.d_op, &qp.q[k], &x, &s.etas, |_, _| {});
            }
            assert!((x - &exact).norm() <= 1e-6 * exact.norm());
        }
    }
}
