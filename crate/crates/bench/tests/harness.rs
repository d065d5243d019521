use std::fs;
use std::path::Path;
use std::process::Command;

use fhmimo::solvers::{IterationTrace, TraceRecord};
use fhmimo_bench::config::{ExperimentSpec, Scenario};
use fhmimo_bench::experiment::run_experiment;
use fhmimo_bench::trace::{read_trace, write_trace, TraceMeta, HEADER};
use fhmimo_bench::BenchError;

const SMALL: &str = r#"
[system]
tx_antennas = 16
rx_antennas = 2
streams = 2
users_per_cell = 3

[solver.exact]
variant = "exact_wmmse"
max_outer_iters = 30

[solver.fh]
variant = "finite_horizon"
max_outer_iters = 30

[experiment]
seeds = [0, 1]
"#;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn meta() -> TraceMeta {
    TraceMeta {
        scenario: "convergence_iters".into(),
        solver: "fh".into(),
        variant: "finite_horizon".into(),
        seed: 3,
        tx_antennas: 8,
        rx_antennas: 2,
        users_per_cell: 2,
        streams: 1,
        num_cells: 1,
        horizon: 5,
    }
}

fn record(i: usize, t: f64) -> TraceRecord {
    TraceRecord {
        outer_iteration: i,
        inner_iteration: None,
        cumulative_seconds: t,
        wsr_bits: 1.5 * i as f64,
        inner_objective: None,
    }
}

/// Every line of the file with the `cumulative_seconds` column removed.
fn without_timing(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with('#') || l == HEADER {
                return l.to_string();
            }
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(2);
            f.join(",")
        })
        .collect()
}

#[test]
fn minimal_config_converts_dbm() {
    let spec = ExperimentSpec::parse(
        "[system]\ntx_antennas = 8\nrx_antennas = 2\nstreams = 2\nusers_per_cell = 1\npower_budget_dbm = 20\n",
    )
    .unwrap();
    assert!((spec.system.power_budget - 0.1).abs() < 1e-15);
    assert_eq!(spec.solvers.len(), 3);
    assert!(spec.solvers.iter().all(|s| s.config.horizon == 5 && s.config.rel_tol == 1e-5));
}

#[test]
fn streams_above_rx_antennas_rejected() {
    let err = ExperimentSpec::parse("[system]\ntx_antennas = 8\nrx_antennas = 2\nstreams = 3\nusers_per_cell = 1\n")
        .unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
    let msg = err.to_string();
    assert!(msg.contains("streams") && msg.contains("receive"), "{msg}");
}

#[test]
fn unknown_key_rejected_with_location() {
    let err = ExperimentSpec::parse(&format!("{SMALL}\n[system.extra]\n")).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
    let err = ExperimentSpec::parse(&SMALL.replace("users_per_cell = 3", "users_per_cell = 3\nfoo = 1")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("foo") && msg.contains("line"), "{msg}");
}

#[test]
fn sweep_values_required_exactly_for_antenna_sweep() {
    let sweep = SMALL.replace("seeds = [0, 1]", "seeds = [0]\nscenario = \"antenna_sweep\"");
    assert!(ExperimentSpec::parse(&sweep).is_err());
    assert!(ExperimentSpec::parse(&format!("{sweep}sweep_values = [16, 32]\n")).is_ok());
    assert!(ExperimentSpec::parse(&format!("{SMALL}sweep_values = [16]\n")).is_err());
    assert!(ExperimentSpec::parse(&SMALL.replace("seeds = [0, 1]", "seeds = []")).is_err());
}

#[test]
fn shipped_configs_round_trip() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let spec = ExperimentSpec::from_path(&path).unwrap();
        let again = ExperimentSpec::parse(&spec.to_toml()).unwrap();
        assert_eq!(spec, again, "{}", path.display());
    }
    let paper = ExperimentSpec::from_path(&configs_dir().join("paper_scale.toml")).unwrap();
    let s = &paper.system;
    assert_eq!((s.num_cells, s.tx_antennas, s.rx_antennas, s.users_per_cell, s.streams), (1, 2048, 8, 6, 8));
    assert!((s.power_budget - 0.1).abs() < 1e-15 && (s.noise_power - 1e-11).abs() < 1e-26);
    assert!(s.weights.iter().all(|&w| w == 1.0));
    assert!(paper.solvers.iter().all(|n| n.config.horizon == 5));
}

#[test]
fn trace_format_contract() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let empty = IterationTrace::default();
    assert!(write_trace(&empty, &meta(), &path).is_err());
    assert!(!path.exists());

    let mut trace = IterationTrace::default();
    for (i, t) in [0.0, 0.5, 0.5].into_iter().enumerate() {
        trace.push(record(i, t));
    }
    write_trace(&trace, &meta(), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "outer_iter,inner_iter,cumulative_seconds,wsr_bits,inner_objective");
    assert_eq!(lines[2], "1,,0.5,1.5,");
    for key in ["seed=3", "variant=finite_horizon", "M=8", "N=2", "K=2", "d=1", "L=1", "T=5"] {
        assert!(text.contains(&format!("# {key}\n")), "{key}");
    }
    let parsed = read_trace(&path).unwrap();
    assert_eq!(parsed.records, trace.records);
    assert_eq!(parsed.meta_value("seed"), Some("3"));
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn validator_rejects_time_going_backwards() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, format!("{HEADER}\n0,,1.0,2.0,\n1,,0.5,2.0,\n")).unwrap();
    assert!(read_trace(&path).is_err());
    fs::write(&path, format!("{HEADER}\n0,,1.0,2.0\n")).unwrap();
    assert!(read_trace(&path).is_err());
}

#[test]
fn runs_are_deterministic_apart_from_timing() {
    let spec = ExperimentSpec::parse(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&spec, a.path()).unwrap();
    let rb = run_experiment(&spec, b.path()).unwrap();
    assert_eq!(ra.failures(), 0);
    assert_eq!(ra.trace_files.len(), 4);
    for (fa, fb) in ra.trace_files.iter().zip(&rb.trace_files) {
        assert_eq!(fa.file_name(), fb.file_name());
        assert_eq!(without_timing(fa), without_timing(fb));
        read_trace(fa).unwrap();
    }
    let summary = fs::read_to_string(&ra.summary_file).unwrap();
    assert!(summary.starts_with("scenario,variant,M,seed,final_wsr_bits,total_seconds,outer_iters,status\n"));
    assert_eq!(summary.lines().filter(|l| l.contains(",mean,")).count(), 2);
}

#[test]
fn iteration_and_time_scenarios_agree() {
    let mut spec = ExperimentSpec::parse(SMALL).unwrap();
    let a = tempfile::tempdir().unwrap();
    let iters = run_experiment(&spec, a.path()).unwrap();
    spec.scenario = Scenario::ConvergenceTime;
    let b = tempfile::tempdir().unwrap();
    let time = run_experiment(&spec, b.path()).unwrap();
    for (x, y) in iters.rows.iter().zip(&time.rows) {
        assert_eq!(x.final_wsr_bits, y.final_wsr_bits);
        assert_eq!(x.outer_iters, y.outer_iters);
    }
    spec.scenario = Scenario::MulticellConvergenceIters;
    let c = tempfile::tempdir().unwrap();
    let multi = run_experiment(&spec, c.path()).unwrap();
    for (x, y) in iters.rows.iter().zip(&multi.rows) {
        assert_eq!(x.final_wsr_bits, y.final_wsr_bits);
    }
}

#[test]
fn antenna_sweep_respects_budget() {
    let text = SMALL
        .replace("max_outer_iters = 30", "max_outer_iters = 100000\nrel_tol = 1e-300")
        .replace("seeds = [0, 1]", "seeds = [0]\nscenario = \"antenna_sweep\"\nsweep_values = [16, 48]\ntime_budget_seconds = 0.05");
    let spec = ExperimentSpec::parse(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(out.rows.len(), 4);
    for f in &out.trace_files {
        let t = read_trace(f).unwrap();
        let times: Vec<f64> = t.records.iter().map(|r| r.cumulative_seconds).collect();
        let longest = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let total = *times.last().unwrap();
        assert!(total <= 0.05 + longest, "{total} with longest step {longest}");
    }
}

#[test]
fn inner_trace_records_one_outer_iteration() {
    let text = SMALL.replace("seeds = [0, 1]", "seeds = [0]\nscenario = \"inner_qp_trace\"\ninner_trace_outer_iter = 2");
    let spec = ExperimentSpec::parse(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&spec, dir.path()).unwrap();
    for f in &out.trace_files {
        let t = read_trace(f).unwrap();
        let expect = if t.meta_value("variant") == Some("exact_wmmse") { 2 } else { 6 };
        assert_eq!(t.records.len(), expect);
        assert!(t.records.iter().all(|r| r.outer_iteration == 2));
        let inner: Vec<usize> = t.records.iter().map(|r| r.inner_iteration.unwrap()).collect();
        assert_eq!(inner, (0..expect).collect::<Vec<_>>());
        let (first, last) = (t.records[0].inner_objective.unwrap(), t.records[expect - 1].inner_objective.unwrap());
        assert!(last < first);
    }
}

#[test]
fn solvers_agree_with_generous_budgets() {
    let text = r#"
[system]
tx_antennas = 64
rx_antennas = 4
streams = 2
users_per_cell = 4
[solver.exact]
variant = "exact_wmmse"
max_outer_iters = 3000
rel_tol = 1e-9
[solver.fh]
variant = "finite_horizon"
max_outer_iters = 3000
rel_tol = 1e-9
[solver.gd]
variant = "constant_gd"
max_outer_iters = 3000
rel_tol = 1e-9
[experiment]
seeds = [0, 2]
"#;
    let spec = ExperimentSpec::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&spec, dir.path()).unwrap();
    for seed in [0, 2] {
        let w: Vec<f64> = out.rows.iter().filter(|r| r.seed == seed).map(|r| r.final_wsr_bits.unwrap()).collect();
        let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi - lo <= 0.02 * hi, "seed {seed}: {w:?}");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fhmimo"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\ntx_antennas = 8\n").unwrap();
    assert_eq!(cli().arg("validate").arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(cli().arg("validate").arg(dir.path().join("missing.toml")).status().unwrap().code(), Some(1));
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    assert_eq!(cli().arg("validate").arg(&good).status().unwrap().code(), Some(0));

    let out = dir.path().join("out");
    let status = cli()
        .args(["run", good.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seeds", "4", "--scenario", "convergence_time"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("convergence_time__fh__M16__seed4.csv").exists());
    assert!(out.join("summary.csv").exists());

    let oracle = cli().arg("oracle").output().unwrap();
    assert_eq!(oracle.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&oracle.stdout).lines().all(|l| l.starts_with("[PASS]")));
}
