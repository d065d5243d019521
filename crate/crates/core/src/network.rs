//! Downlink system model: configuration, channels, precoders and rates.
//!
//! Indexing convention: cells `l, i` in `0..L`, users `k, j` in `0..K`.
//! `H[(l,k), i]` is the `N x M` channel from BS `i` to user `k` of cell `l`,
//! and `V[(l,k)]` is the `M x d` precoder BS `l` uses for its user `k`.
//! All rates and objectives are in bits (base-2 logarithms).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::{self, complex_gaussian, hermitianize, norm_sq};
use crate::{CMat, Error, Result};

/// Path-loss intercept in dB at 1 m.
pub const PATHLOSS_INTERCEPT_DB: f64 = 15.3;
/// Path-loss slope in dB per decade of distance.
pub const PATHLOSS_SLOPE_DB: f64 = 37.6;

/// Convert dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Linear power gain for a link of length `distance_m` with shadowing `shadow_db`.
pub fn pathloss_gain(distance_m: f64, shadow_db: f64) -> f64 {
    let loss_db = PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB * distance_m.log10() + shadow_db;
    10f64.powf(-loss_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_cells: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub users_per_cell: usize,
    /// Noise power sigma^2 in watts.
    pub noise_power: f64,
    /// Per-cell power budget P in watts.
    pub power_budget: f64,
    /// Rate weights, `num_cells * users_per_cell` entries indexed `l * K + k`.
    pub weights: Vec<f64>,
    pub bs_spacing: f64,
    pub cell_radius: f64,
    pub shadowing_sigma_db: f64,
    pub min_distance: f64,
}

impl SystemConfig {
    /// Configuration with the default link budget (20 dBm, -80 dBm noise, 8 dB
    /// shadowing, 800 m BS spacing, 400 m cells) and unit weights.
    pub fn new(num_cells: usize, tx: usize, rx: usize, streams: usize, users: usize) -> Self {
        Self {
            num_cells,
            tx_antennas: tx,
            rx_antennas: rx,
            streams,
            users_per_cell: users,
            noise_power: dbm_to_watts(-80.0),
            power_budget: dbm_to_watts(20.0),
            weights: vec![1.0; num_cells * users],
            bs_spacing: 800.0,
            cell_radius: 400.0,
            shadowing_sigma_db: 8.0,
            min_distance: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_cells == 0
            || self.tx_antennas == 0
            || self.rx_antennas == 0
            || self.streams == 0
            || self.users_per_cell == 0
        {
            return bad("all dimensions must be positive".into());
        }
        if self.num_cells > 7 {
            return bad(format!("at most 7 cells are supported, got {}", self.num_cells));
        }
        if self.streams > self.rx_antennas {
            return bad(format!(
                "streams d = {} exceeds receive antennas N = {} (need d <= N)",
                self.streams, self.rx_antennas
            ));
        }
        if self.tx_antennas < self.rx_antennas {
            return bad(format!(
                "transmit antennas M = {} must be at least N = {}",
                self.tx_antennas, self.rx_antennas
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad("noise power must be positive".into());
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return bad("power budget must be positive".into());
        }
        if self.weights.len() != self.num_cells * self.users_per_cell {
            return bad(format!(
                "expected {} weights, got {}",
                self.num_cells * self.users_per_cell,
                self.weights.len()
            ));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("weights must be positive".into());
        }
        if self.shadowing_sigma_db < 0.0 || self.min_distance <= 0.0 || self.cell_radius <= self.min_distance {
            return bad("geometry: need shadowing >= 0 and cell radius > minimum distance > 0".into());
        }
        Ok(())
    }

    pub fn weight(&self, l: usize, k: usize) -> f64 {
        self.weights[l * self.users_per_cell + k]
    }

    /// BS positions on a hexagonal layout: one center site plus a ring of six.
    pub fn bs_positions(&self) -> Vec<(f64, f64)> {
        (0..self.num_cells)
            .map(|i| {
                if i == 0 {
                    (0.0, 0.0)
                } else {
                    let a = PI / 3.0 * (i - 1) as f64;
                    (self.bs_spacing * a.cos(), self.bs_spacing * a.sin())
                }
            })
            .collect()
    }
}

/// All downlink channels of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub config: SystemConfig,
    h: Vec<CMat>,
}

impl ChannelSet {
    /// Build from channels ordered `((l * K + k) * L + i)`.
    pub fn new(config: SystemConfig, h: Vec<CMat>) -> Result<Self> {
        config.validate()?;
        let (l, k) = (config.num_cells, config.users_per_cell);
        if h.len() != l * k * l {
            return Err(Error::Shape(format!("expected {} channel matrices, got {}", l * k * l, h.len())));
        }
        for m in &h {
            if m.nrows() != config.rx_antennas || m.ncols() != config.tx_antennas {
                return Err(Error::Shape(format!(
                    "channel is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    config.rx_antennas,
                    config.tx_antennas
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Shape("channel has non-finite entries".into()));
            }
        }
        Ok(Self { config, h })
    }

    /// Single-cell network from the per-user channels `H_k`.
    pub fn single_cell(config: SystemConfig, h: Vec<CMat>) -> Result<Self> {
        if config.num_cells != 1 {
            return Err(Error::InvalidConfig("single_cell requires num_cells = 1".into()));
        }
        Self::new(config, h)
    }

    /// Channel from BS `i` to user `k` of cell `l`.
    pub fn h(&self, l: usize, k: usize, i: usize) -> &CMat {
        let c = &self.config;
        &self.h[(l * c.users_per_cell + k) * c.num_cells + i]
    }

    pub fn num_cells(&self) -> usize {
        self.config.num_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.config.users_per_cell
    }
}

/// Draw one `n x m` channel at the given distance with log-normal shadowing.
pub fn draw_channel<R: Rng + ?Sized>(n: usize, m: usize, distance_m: f64, shadowing_sigma_db: f64, rng: &mut R) -> CMat {
    let shadow = if shadowing_sigma_db > 0.0 {
        Normal::new(0.0, shadowing_sigma_db).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    let amp = pathloss_gain(distance_m, shadow).sqrt();
    complex_gaussian(n, m, rng) * Complex64::from(amp)
}

/// Random network realization: users uniform in a disk around their BS
/// (rejection below the minimum distance), i.i.d. Rayleigh fading scaled by
/// distance path loss and shadowing. Deterministic in `seed`.
pub fn generate_channels(config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs = config.bs_positions();
    let (nc, nk) = (config.num_cells, config.users_per_cell);
    let mut h = Vec::with_capacity(nc * nk * nc);
    for &(bx, by) in &bs {
        for _k in 0..nk {
            let (ux, uy) = loop {
                let r = config.cell_radius * rng.random::<f64>().sqrt();
                let th = 2.0 * PI * rng.random::<f64>();
                if r >= config.min_distance {
                    break (bx + r * th.cos(), by + r * th.sin());
                }
            };
            for &(px, py) in &bs {
                let dist = ((ux - px).powi(2) + (uy - py).powi(2)).sqrt().max(config.min_distance);
                h.push(draw_channel(
                    config.rx_antennas,
                    config.tx_antennas,
                    dist,
                    config.shadowing_sigma_db,
                    &mut rng,
                ));
            }
        }
    }
    ChannelSet::new(config.clone(), h)
}

/// Transmit precoders of every BS.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    num_cells: usize,
    users_per_cell: usize,
    v: Vec<CMat>,
}

impl PrecoderSet {
    /// Build from precoders ordered `l * K + k`.
    pub fn new(num_cells: usize, users_per_cell: usize, v: Vec<CMat>) -> Result<Self> {
        if v.len() != num_cells * users_per_cell {
            return Err(Error::Shape(format!(
                "expected {} precoders, got {}",
                num_cells * users_per_cell,
                v.len()
            )));
        }
        Ok(Self {
            num_cells,
            users_per_cell,
            v,
        })
    }

    pub fn zeros(config: &SystemConfig) -> Self {
        let v = vec![CMat::zeros(config.tx_antennas, config.streams); config.num_cells * config.users_per_cell];
        Self {
            num_cells: config.num_cells,
            users_per_cell: config.users_per_cell,
            v,
        }
    }

    pub fn get(&self, l: usize, k: usize) -> &CMat {
        &self.v[l * self.users_per_cell + k]
    }

    pub fn get_mut(&mut self, l: usize, k: usize) -> &mut CMat {
        &mut self.v[l * self.users_per_cell + k]
    }

    pub fn set(&mut self, l: usize, k: usize, value: CMat) {
        self.v[l * self.users_per_cell + k] = value;
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn as_slice(&self) -> &[CMat] {
        &self.v
    }

    /// Sum of squared Frobenius norms of cell `l`'s precoders.
    pub fn cell_power(&self, l: usize) -> f64 {
        (0..self.users_per_cell).map(|k| norm_sq(self.get(l, k))).sum()
    }

    /// Multiply every precoder by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            num_cells: self.num_cells,
            users_per_cell: self.users_per_cell,
            v: self.v.iter().map(|m| m * c).collect(),
        }
    }

    /// A precoder set is nontrivial when some `H[(l,k), l] V[(l,k)]` is nonzero.
    pub fn is_nontrivial(&self, channels: &ChannelSet) -> bool {
        (0..self.num_cells)
            .any(|l| (0..self.users_per_cell).any(|k| norm_sq(&(channels.h(l, k, l) * self.get(l, k))) > 0.0))
    }
}

/// Complex Gaussian precoders scaled so every cell spends exactly its budget.
pub fn random_precoders(config: &SystemConfig, seed: u64) -> Result<PrecoderSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let v = (0..config.num_cells * config.users_per_cell)
        .map(|_| complex_gaussian(config.tx_antennas, config.streams, &mut rng))
        .collect();
    power_normalize(&PrecoderSet::new(config.num_cells, config.users_per_cell, v)?, config)
}

/// Scale each cell's precoders by `rho_l = sqrt(P / sum_k ||V_lk||^2)`.
pub fn power_normalize(precoders: &PrecoderSet, config: &SystemConfig) -> Result<PrecoderSet> {
    let mut out = precoders.clone();
    for l in 0..precoders.num_cells {
        let p = precoders.cell_power(l);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::ZeroPower { cell: l });
        }
        let rho = Complex64::from((config.power_budget / p).sqrt());
        for k in 0..precoders.users_per_cell {
            *out.get_mut(l, k) *= rho;
        }
    }
    Ok(out)
}

/// Products `G[(l,k), (i,j)] = H[(l,k), i] V[(i,j)]` for every receiver/transmit-stream pair.
pub(crate) struct CrossTerms {
    nl: usize,
    nk: usize,
    g: Vec<CMat>,
}

impl CrossTerms {
    pub(crate) fn new(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<Self> {
        let (nl, nk) = (channels.num_cells(), channels.users_per_cell());
        if precoders.num_cells != nl || precoders.users_per_cell != nk {
            return Err(Error::Shape("precoder set does not match the network".into()));
        }
        let c = &channels.config;
        for v in &precoders.v {
            if v.nrows() != c.tx_antennas || v.ncols() != c.streams {
                return Err(Error::Shape(format!(
                    "precoder is {}x{}, expected {}x{}",
                    v.nrows(),
                    v.ncols(),
                    c.tx_antennas,
                    c.streams
                )));
            }
        }
        let mut g = Vec::with_capacity(nl * nk * nl * nk);
        for l in 0..nl {
            for k in 0..nk {
                for i in 0..nl {
                    let h = channels.h(l, k, i);
                    for j in 0..nk {
                        g.push(h * precoders.get(i, j));
                    }
                }
            }
        }
        Ok(Self { nl, nk, g })
    }

    pub(crate) fn get(&self, l: usize, k: usize, i: usize, j: usize) -> &CMat {
        &self.g[((l * self.nk + k) * self.nl + i) * self.nk + j]
    }

    /// Own signal `H[(l,k), l] V[(l,k)]`.
    pub(crate) fn signal(&self, l: usize, k: usize) -> &CMat {
        self.get(l, k, l, k)
    }

    /// `noise * I + sum_{(i,j) != (l,k)} G G^H`.
    pub(crate) fn covariance(&self, l: usize, k: usize, noise: f64) -> CMat {
        let n = self.signal(l, k).nrows();
        let mut f = CMat::identity(n, n) * Complex64::from(noise);
        for i in 0..self.nl {
            for j in 0..self.nk {
                if (i, j) != (l, k) {
                    let g = self.get(l, k, i, j);
                    f.gemm(Complex64::from(1.0), g, &g.adjoint(), Complex64::from(1.0));
                }
            }
        }
        hermitianize(&mut f);
        f
    }
}

/// Noise coefficient of the scaled-noise matrix of cell `l`: `sigma^2 / P * sum_k ||V_lk||^2`.
pub(crate) fn scaled_noise_level(config: &SystemConfig, precoders: &PrecoderSet, l: usize) -> Result<f64> {
    let p = precoders.cell_power(l);
    if !(p > 0.0) {
        return Err(Error::ZeroPower { cell: l });
    }
    Ok(config.noise_power / config.power_budget * p)
}

/// `log2 |I + S^H F^{-1} S|`.
pub(crate) fn log2_sinr_det(signal: &CMat, f: &CMat) -> Result<f64> {
    let x = linalg::solve_hpd(f, signal)?;
    let d = signal.ncols();
    let mut m = CMat::identity(d, d) + signal.adjoint() * x;
    hermitianize(&mut m);
    linalg::logdet_hpd(&m)
}

fn check_cell_user(channels: &ChannelSet, l: usize, k: usize) -> Result<()> {
    if l >= channels.num_cells() || k >= channels.users_per_cell() {
        return Err(Error::Shape(format!("no user ({l}, {k}) in this network")));
    }
    Ok(())
}

/// Achievable rate of user `k` in cell `l`, in bits.
pub fn rate(channels: &ChannelSet, precoders: &PrecoderSet, l: usize, k: usize) -> Result<f64> {
    check_cell_user(channels, l, k)?;
    let cross = CrossTerms::new(channels, precoders)?;
    let f = cross.covariance(l, k, channels.config.noise_power);
    Ok(log2_sinr_det(cross.signal(l, k), &f)?.max(0.0))
}

/// Weighted sum rate `sum_{l,k} w_lk R_lk`, in bits.
pub fn wsr(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<f64> {
    let cross = CrossTerms::new(channels, precoders)?;
    let c = &channels.config;
    let mut total = 0.0;
    for l in 0..c.num_cells {
        for k in 0..c.users_per_cell {
            let f = cross.covariance(l, k, c.noise_power);
            total += c.weight(l, k) * log2_sinr_det(cross.signal(l, k), &f)?.max(0.0);
        }
    }
    Ok(total)
}

/// Interference-plus-noise matrix with the noise scaled by the serving cell's
/// actual-to-budget power ratio.
pub fn scaled_noise_matrix(channels: &ChannelSet, precoders: &PrecoderSet, l: usize, k: usize) -> Result<CMat> {
    check_cell_user(channels, l, k)?;
    let cross = CrossTerms::new(channels, precoders)?;
    let noise = scaled_noise_level(&channels.config, precoders, l)?;
    Ok(cross.covariance(l, k, noise))
}

/// Scale-invariant unconstrained objective `g(V)`: the weighted sum rate
/// with every `F` replaced by its scaled-noise counterpart.
pub fn objective_g(channels: &ChannelSet, precoders: &PrecoderSet) -> Result<f64> {
    let cross = CrossTerms::new(channels, precoders)?;
    let c = &channels.config;
    let mut total = 0.0;
    for l in 0..c.num_cells {
        let noise = scaled_noise_level(c, precoders, l)?;
        for k in 0..c.users_per_cell {
            let f = cross.covariance(l, k, noise);
            total += c.weight(l, k) * log2_sinr_det(cross.signal(l, k), &f)?;
        }
    }
    Ok(total)
}
