//! Experiment runner: one trace file per (solver, seed, antenna count) plus a
//! `summary.csv` with per-run rows and per-(solver, M) means.
//!
//! The convergence scenarios run every solver to convergence or to its
//! iteration cap; the `_iters` and `_time` flavors perform the same
//! computation and differ only in which column is meant for the x-axis.
//! `time_budget_seconds` applies to `antenna_sweep` only. `inner_qp_trace`
//! records, for one outer iteration, the QP objective summed over all users
//! after each inner step.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fhmimo::network::{generate_channels, ChannelSet, SystemConfig};
use fhmimo::solvers::{gradient_steps, run_solver_with, IterationTrace, SolverConfig, TraceRecord};
use fhmimo::{CMat, Error};

use crate::config::{ExperimentSpec, NamedSolver, Scenario};
use crate::trace::{trace_path, write_trace, TraceMeta};
use crate::BenchError;

pub const SUMMARY_HEADER: &str = "scenario,variant,M,seed,final_wsr_bits,total_seconds,outer_iters,status";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    /// `[solver.<name>]` label.
    pub solver: String,
    pub tx_antennas: usize,
    pub seed: u64,
    pub final_wsr_bits: Option<f64>,
    pub total_seconds: Option<f64>,
    pub outer_iters: Option<usize>,
    /// `ok`, or `error: ...` when the run failed.
    pub status: String,
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub rows: Vec<SummaryRow>,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

fn points(spec: &ExperimentSpec) -> Vec<SystemConfig> {
    match (&spec.sweep_values, spec.scenario) {
        (Some(ms), Scenario::AntennaSweep) => ms
            .iter()
            .map(|&m| SystemConfig {
                tx_antennas: m,
                ..spec.system.clone()
            })
            .collect(),
        _ => vec![spec.system.clone()],
    }
}

fn solver_config(spec: &ExperimentSpec, solver: &NamedSolver, seed: u64) -> SolverConfig {
    let mut c = SolverConfig {
        seed,
        ..solver.config.clone()
    };
    match spec.scenario {
        Scenario::AntennaSweep => c.time_budget_seconds = spec.time_budget_seconds,
        Scenario::InnerQpTrace => {
            c.max_outer_iters = spec.inner_trace_outer_iter;
            c.rel_tol = f64::MIN_POSITIVE;
        }
        _ => {}
    }
    c
}

/// Per-step QP objective summed over all users of the traced outer iteration.
fn run_inner_trace(
    channels: &ChannelSet,
    config: &SolverConfig,
    target: usize,
) -> Result<(IterationTrace, usize), (Error, IterationTrace)> {
    let mut objective: Vec<f64> = Vec::new();
    let mut seconds: Vec<f64> = Vec::new();
    let out = run_solver_with(channels, config, None, &mut |p| {
        if p.outer_iteration != target {
            return;
        }
        let t0 = Instant::now();
        let mut steps = vec![p.qp.objective(p.v_start, p.user)];
        let mut times = vec![0.0];
        match p.schedule {
            Some(s) => {
                gradient_steps(&p.qp.d_op, &p.qp.q[p.user], p.v_start, &s.etas, |_, v: &CMat| {
                    steps.push(p.qp.objective(v, p.user));
                    times.push(t0.elapsed().as_secs_f64());
                });
            }
            None => {
                steps.push(p.qp.objective(p.v_end, p.user));
                times.push(t0.elapsed().as_secs_f64());
            }
        }
        if objective.is_empty() {
            objective = vec![0.0; steps.len()];
            seconds = vec![0.0; steps.len()];
        }
        for (t, (g, s)) in steps.into_iter().zip(times).enumerate() {
            objective[t] += g;
            seconds[t] += s;
        }
    })
    .map_err(|e| (e.source, e.trace))?;
    let start_wsr = out
        .trace
        .records
        .get(target - 1)
        .map(|r| r.wsr_bits)
        .unwrap_or(f64::NAN);
    let mut trace = IterationTrace::default();
    for (t, (&g, &s)) in objective.iter().zip(&seconds).enumerate() {
        trace.push(TraceRecord {
            outer_iteration: target,
            inner_iteration: Some(t),
            cumulative_seconds: s,
            wsr_bits: start_wsr,
            inner_objective: Some(g),
        });
    }
    Ok((trace, out.outer_iters))
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summary_line(r: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.scenario,
        r.solver,
        r.tx_antennas,
        r.seed,
        fmt_opt(r.final_wsr_bits),
        fmt_opt(r.total_seconds),
        fmt_opt(r.outer_iters),
        csv_field(&r.status)
    )
}

/// `seed = mean` rows over the successful runs of each (solver, M).
pub fn mean_lines(rows: &[SummaryRow]) -> Vec<String> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.solver.clone(), r.tx_antennas);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(solver, m)| {
            let ok: Vec<&SummaryRow> = rows
                .iter()
                .filter(|r| r.solver == solver && r.tx_antennas == m && r.status == "ok")
                .collect();
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&SummaryRow) -> f64| {
                if ok.is_empty() {
                    String::new()
                } else {
                    (ok.iter().map(|r| f(r)).sum::<f64>() / n).to_string()
                }
            };
            format!(
                "{},{},{},mean,{},{},{},mean_of_{}",
                rows[0].scenario,
                solver,
                m,
                mean(&|r| r.final_wsr_bits.unwrap_or(0.0)),
                mean(&|r| r.total_seconds.unwrap_or(0.0)),
                mean(&|r| r.outer_iters.unwrap_or(0) as f64),
                ok.len()
            )
        })
        .collect()
}

fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), BenchError> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&summary_line(r));
        text.push('\n');
    }
    if !rows.is_empty() {
        for l in mean_lines(rows) {
            text.push_str(&l);
            text.push('\n');
        }
    }
    let tmp = path.with_extension("csv.partial");
    fs::write(&tmp, text).map_err(|e| BenchError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

/// Run every (sweep point, seed, solver) cell of the spec. Solver failures are
/// recorded in the summary and do not stop the run; I/O failures do.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunOutcome, BenchError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| BenchError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut outcome = RunOutcome::default();
    for system in points(spec) {
        for &seed in &spec.seeds {
            let channels = generate_channels(&system, seed);
            for solver in &spec.solvers {
                let cfg = solver_config(spec, solver, seed);
                let mut row = SummaryRow {
                    scenario: spec.scenario,
                    solver: solver.name.clone(),
                    tx_antennas: system.tx_antennas,
                    seed,
                    final_wsr_bits: None,
                    total_seconds: None,
                    outer_iters: None,
                    status: "ok".into(),
                };
                let channels = match &channels {
                    Ok(c) => c,
                    Err(e) => {
                        row.status = format!("error: {e}");
                        outcome.rows.push(row);
                        continue;
                    }
                };
                let result = if spec.scenario == Scenario::InnerQpTrace {
                    run_inner_trace(channels, &cfg, spec.inner_trace_outer_iter)
                } else {
                    run_solver_with(channels, &cfg, None, &mut |_| {})
                        .map(|o| (o.trace, o.outer_iters))
                        .map_err(|e| (e.source, e.trace))
                };
                let (trace, iters) = match result {
                    Ok((t, n)) => (t, Some(n)),
                    Err((e, partial)) => {
                        row.status = format!("error: {e}");
                        row.outer_iters = partial.records.last().map(|r| r.outer_iteration);
                        (partial, None)
                    }
                };
                if let Some(last) = trace.records.last() {
                    row.final_wsr_bits = Some(last.wsr_bits);
                    row.total_seconds = Some(last.cumulative_seconds);
                }
                if let Some(it) = iters {
                    row.outer_iters = Some(it);
                }
                if !trace.is_empty() {
                    let meta = TraceMeta {
                        scenario: spec.scenario.name().into(),
                        solver: solver.name.clone(),
                        variant: cfg.variant.name().into(),
                        seed,
                        tx_antennas: system.tx_antennas,
                        rx_antennas: system.rx_antennas,
                        users_per_cell: system.users_per_cell,
                        streams: system.streams,
                        num_cells: system.num_cells,
                        horizon: cfg.horizon,
                    };
                    let path = trace_path(out_dir, &meta);
                    write_trace(&trace, &meta, &path)?;
                    outcome.trace_files.push(path);
                }
                outcome.rows.push(row);
            }
        }
    }
    outcome.summary_file = out_dir.join("summary.csv");
    write_summary(&outcome.rows, &outcome.summary_file)?;
    Ok(outcome)
}
