//! Experiment configuration files.
//!
//! ```toml
//! [system]
//! num_cells = 1
//! tx_antennas = 64
//! rx_antennas = 4
//! streams = 2
//! users_per_cell = 4
//! power_budget_dbm = 20.0     # or power_budget_watts
//! noise_power_dbm = -80.0     # or noise_power_watts
//!
//! [solver.fh]
//! variant = "finite_horizon"
//! horizon = 5
//!
//! [experiment]
//! scenario = "convergence_iters"
//! seeds = [0, 1, 2]
//! ```
//!
//! Unknown keys are rejected. Powers are converted to watts on parsing; the
//! serialized form always uses the `_watts` keys so it round-trips exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use fhmimo::network::{dbm_to_watts, SystemConfig};
use fhmimo::solvers::{SolverConfig, SpectralRefresh, Variant};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ConvergenceIters,
    ConvergenceTime,
    InnerQpTrace,
    AntennaSweep,
    MulticellConvergenceIters,
    MulticellConvergenceTime,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::ConvergenceIters,
        Scenario::ConvergenceTime,
        Scenario::InnerQpTrace,
        Scenario::AntennaSweep,
        Scenario::MulticellConvergenceIters,
        Scenario::MulticellConvergenceTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ConvergenceIters => "convergence_iters",
            Scenario::ConvergenceTime => "convergence_time",
            Scenario::InnerQpTrace => "inner_qp_trace",
            Scenario::AntennaSweep => "antenna_sweep",
            Scenario::MulticellConvergenceIters => "multicell_convergence_iters",
            Scenario::MulticellConvergenceTime => "multicell_convergence_time",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum VariantKey {
    ExactWmmse,
    FiniteHorizon,
    ConstantGd,
}

impl From<VariantKey> for Variant {
    fn from(v: VariantKey) -> Self {
        match v {
            VariantKey::ExactWmmse => Variant::ExactWmmse,
            VariantKey::FiniteHorizon => Variant::FiniteHorizon,
            VariantKey::ConstantGd => Variant::ConstantGd,
        }
    }
}

impl From<Variant> for VariantKey {
    fn from(v: Variant) -> Self {
        match v {
            Variant::ExactWmmse => VariantKey::ExactWmmse,
            Variant::FiniteHorizon => VariantKey::FiniteHorizon,
            Variant::ConstantGd => VariantKey::ConstantGd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RefreshKey {
    EveryOuter,
    Once,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    system: RawSystem,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    solver: BTreeMap<String, RawSolver>,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(default = "one")]
    num_cells: usize,
    tx_antennas: usize,
    rx_antennas: usize,
    streams: usize,
    users_per_cell: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_budget_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_budget_watts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_power_watts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shadowing_sigma_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bs_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cell_radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_distance_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    variant: VariantKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_outer_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral_refresh: Option<RefreshKey>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_budget_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inner_trace_outer_iter: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedSolver {
    pub name: String,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub system: SystemConfig,
    /// Sorted by name.
    pub solvers: Vec<NamedSolver>,
    pub seeds: Vec<u64>,
    pub sweep_values: Option<Vec<usize>>,
    pub time_budget_seconds: Option<f64>,
    /// Outer iteration whose inner loops are recorded by `inner_qp_trace`.
    pub inner_trace_outer_iter: usize,
}

pub const DEFAULT_POWER_DBM: f64 = 20.0;
pub const DEFAULT_NOISE_DBM: f64 = -80.0;

fn config_error(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

fn pick_power(dbm: Option<f64>, watts: Option<f64>, key: &str, default_dbm: f64) -> Result<f64, BenchError> {
    match (dbm, watts) {
        (Some(_), Some(_)) => Err(config_error(format!(
            "system: give only one of `{key}_dbm` and `{key}_watts`"
        ))),
        (Some(d), None) => Ok(dbm_to_watts(d)),
        (None, Some(w)) => Ok(w),
        (None, None) => Ok(dbm_to_watts(default_dbm)),
    }
}

fn default_solvers() -> Vec<NamedSolver> {
    [Variant::ConstantGd, Variant::ExactWmmse, Variant::FiniteHorizon]
        .into_iter()
        .map(|v| NamedSolver {
            name: v.name().to_string(),
            config: SolverConfig::new(v),
        })
        .collect()
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            BenchError::Config(msg) => config_error(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        let s = raw.system;
        let mut system = SystemConfig::new(s.num_cells, s.tx_antennas, s.rx_antennas, s.streams, s.users_per_cell);
        system.power_budget = pick_power(s.power_budget_dbm, s.power_budget_watts, "power_budget", DEFAULT_POWER_DBM)?;
        system.noise_power = pick_power(s.noise_power_dbm, s.noise_power_watts, "noise_power", DEFAULT_NOISE_DBM)?;
        if let Some(w) = s.weights {
            system.weights = w;
        }
        if let Some(x) = s.shadowing_sigma_db {
            system.shadowing_sigma_db = x;
        }
        if let Some(x) = s.bs_spacing_m {
            system.bs_spacing = x;
        }
        if let Some(x) = s.cell_radius_m {
            system.cell_radius = x;
        }
        if let Some(x) = s.min_distance_m {
            system.min_distance = x;
        }
        system
            .validate()
            .map_err(|e| config_error(format!("[system]: {e}")))?;

        let solvers = if raw.solver.is_empty() {
            default_solvers()
        } else {
            raw.solver
                .into_iter()
                .map(|(name, r)| {
                    let d = SolverConfig::new(r.variant.into());
                    let config = SolverConfig {
                        horizon: r.horizon.unwrap_or(d.horizon),
                        max_outer_iters: r.max_outer_iters.unwrap_or(d.max_outer_iters),
                        rel_tol: r.rel_tol.unwrap_or(d.rel_tol),
                        spectral_refresh: match r.spectral_refresh {
                            Some(RefreshKey::Once) => SpectralRefresh::Once,
                            _ => SpectralRefresh::EveryOuter,
                        },
                        ..d
                    };
                    config
                        .validate()
                        .map_err(|e| config_error(format!("[solver.{name}]: {e}")))?;
                    Ok(NamedSolver { name, config })
                })
                .collect::<Result<Vec<_>, BenchError>>()?
        };

        let e = raw.experiment;
        let spec = ExperimentSpec {
            scenario: e.scenario.unwrap_or(Scenario::ConvergenceIters),
            system,
            solvers,
            seeds: e.seeds.unwrap_or_else(|| vec![0]),
            sweep_values: e.sweep_values,
            time_budget_seconds: e.time_budget_seconds,
            inner_trace_outer_iter: e.inner_trace_outer_iter.unwrap_or(1),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.solvers.is_empty() {
            return Err(config_error("at least one [solver.<name>] section is required"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("[experiment]: seeds must not be empty"));
        }
        match (self.scenario, &self.sweep_values) {
            (Scenario::AntennaSweep, None) => {
                return Err(config_error("[experiment]: antenna_sweep requires sweep_values"));
            }
            (Scenario::AntennaSweep, Some(v)) => {
                if v.is_empty() {
                    return Err(config_error("[experiment]: sweep_values must not be empty"));
                }
                for &m in v {
                    if m < self.system.rx_antennas {
                        return Err(config_error(format!(
                            "[experiment]: sweep value {m} is below rx_antennas = {}",
                            self.system.rx_antennas
                        )));
                    }
                }
            }
            (_, Some(_)) => {
                return Err(config_error(format!(
                    "[experiment]: sweep_values is only valid for antenna_sweep, not {}",
                    self.scenario
                )));
            }
            (_, None) => {}
        }
        if let Some(b) = self.time_budget_seconds {
            if !(b > 0.0 && b.is_finite()) {
                return Err(config_error("[experiment]: time_budget_seconds must be positive"));
            }
        }
        if self.inner_trace_outer_iter == 0 {
            return Err(config_error("[experiment]: inner_trace_outer_iter counts from 1"));
        }
        Ok(())
    }

    /// Serialize to the config grammar; parsing the result yields an equal spec.
    pub fn to_toml(&self) -> String {
        let s = &self.system;
        let raw = RawFile {
            system: RawSystem {
                num_cells: s.num_cells,
                tx_antennas: s.tx_antennas,
                rx_antennas: s.rx_antennas,
                streams: s.streams,
                users_per_cell: s.users_per_cell,
                power_budget_dbm: None,
                power_budget_watts: Some(s.power_budget),
                noise_power_dbm: None,
                noise_power_watts: Some(s.noise_power),
                weights: Some(s.weights.clone()),
                shadowing_sigma_db: Some(s.shadowing_sigma_db),
                bs_spacing_m: Some(s.bs_spacing),
                cell_radius_m: Some(s.cell_radius),
                min_distance_m: Some(s.min_distance),
            },
            solver: self
                .solvers
                .iter()
                .map(|n| {
                    let c = &n.config;
                    let raw = RawSolver {
                        variant: c.variant.into(),
                        horizon: Some(c.horizon),
                        max_outer_iters: Some(c.max_outer_iters),
                        rel_tol: Some(c.rel_tol),
                        spectral_refresh: Some(match c.spectral_refresh {
                            SpectralRefresh::EveryOuter => RefreshKey::EveryOuter,
                            SpectralRefresh::Once => RefreshKey::Once,
                        }),
                    };
                    (n.name.clone(), raw)
                })
                .collect(),
            experiment: RawExperiment {
                scenario: Some(self.scenario),
                seeds: Some(self.seeds.clone()),
                sweep_values: self.sweep_values.clone(),
                time_budget_seconds: self.time_budget_seconds,
                inner_trace_outer_iter: Some(self.inner_trace_outer_iter),
            },
        };
        toml::to_string(&raw).expect("config types always serialize")
    }
}
