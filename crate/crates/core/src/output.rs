//! Result persistence: one CSV per trace plus a JSON summary.
//!
//! Floats are printed with 17 significant digits so reading a CSV back
//! reproduces the in-memory trace exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::RoundRecord;
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::runner::ResultSet;

pub const TRACE_COLUMNS: [&str; 8] = [
    "t",
    "episode",
    "chosen_arm",
    "optimal_arm",
    "reward",
    "inst_regret",
    "cum_regret",
    "est_error",
];

/// JSON summary written next to the trace CSVs. The normative schema ships
/// at `schemas/summary.schema.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub config_echo: ExperimentConfig,
    /// Fitted log-log regret slope; null when the fit is undefined.
    pub slope: Option<f64>,
    pub slope_ci: [Option<f64>; 2],
    pub final_regret_mean: f64,
    pub final_regret_ci: [f64; 2],
    pub fit_window: [usize; 2],
    pub resolved_t_min: Vec<[u64; 2]>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Summary {
    pub fn from_result_set(rs: &ResultSet) -> Self {
        let (ci_lo, ci_hi) = rs.final_regret_ci90();
        Summary {
            config_echo: rs.config.clone(),
            slope: rs.slope.valid.then_some(rs.slope.slope).and_then(finite),
            slope_ci: [finite(rs.slope.ci_lo), finite(rs.slope.ci_hi)],
            final_regret_mean: rs.final_regret_mean,
            final_regret_ci: [ci_lo, ci_hi],
            fit_window: [rs.fit_window.0, rs.fit_window.1],
            resolved_t_min: rs.resolved_t_min.iter().map(|(s, t)| [*s, *t as u64]).collect(),
        }
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// Write every trace CSV and the summary JSON into `dir`; returns the paths
/// written. Fails on an empty result set.
pub fn emit_results(rs: &ResultSet, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if rs.traces.is_empty() {
        return Err(Error::precondition("nothing to write: result set has no traces"));
    }
    match rs.config.output.format {
        OutputFormat::Csv => {}
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut written = Vec::new();
    for trace in &rs.traces {
        let path = dir.join(trace_file_name(trace.seed));
        write_trace_csv(&path, &trace.rounds)?;
        written.push(path);
    }

    let summary = Summary::from_result_set(rs);
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::config(format!("summary serialization failed: {e}")))?;
    std::fs::write(&path, json).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

pub fn write_trace_csv(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Csv { path: path.display().to_string(), message: e.to_string() })?;
    writer
        .write_record(TRACE_COLUMNS)
        .map_err(|e| Error::Csv { path: path.display().to_string(), message: e.to_string() })?;
    for r in rounds {
        writer
            .write_record([
                r.t.to_string(),
                r.episode.to_string(),
                r.chosen.to_string(),
                r.optimal.to_string(),
                fmt_float(r.reward),
                fmt_float(r.inst_regret),
                fmt_float(r.cum_regret),
                fmt_float(r.est_error),
            ])
            .map_err(|e| Error::Csv { path: path.display().to_string(), message: e.to_string() })?;
    }
    writer
        .flush()
        .map_err(|e| Error::Csv { path: path.display().to_string(), message: e.to_string() })?;
    Ok(())
}

/// Read a trace CSV back into round records; exact inverse of
/// [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Csv { path: path.display().to_string(), message: e.to_string() })?;
    let csv_err =
        |e: String| Error::Csv { path: path.display().to_string(), message: e };
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if headers.iter().ne(TRACE_COLUMNS) {
        return Err(csv_err(format!("unexpected columns: {headers:?}")));
    }
    let mut rounds = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        if row.len() != TRACE_COLUMNS.len() {
            return Err(csv_err(format!("expected {} fields, got {}", TRACE_COLUMNS.len(), row.len())));
        }
        let parse_usize = |i: usize| -> Result<usize> {
            row[i].parse::<usize>().map_err(|e| csv_err(format!("field {i}: {e}")))
        };
        let parse_f64 = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|e| csv_err(format!("field {i}: {e}")))
        };
        rounds.push(RoundRecord {
            t: parse_usize(0)?,
            episode: parse_usize(1)?,
            chosen: parse_usize(2)?,
            optimal: parse_usize(3)?,
            reward: parse_f64(4)?,
            inst_regret: parse_f64(5)?,
            cum_regret: parse_f64(6)?,
            est_error: parse_f64(7)?,
        });
    }
    Ok(rounds)
}

/// Load all `trace_seed*.csv` files from a directory, sorted by seed.
pub fn load_traces_from_dir(dir: impl AsRef<Path>) -> Result<Vec<(u64, Vec<RoundRecord>)>> {
    let dir = dir.as_ref();
    let mut traces = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(seed_str) = name.strip_prefix("trace_seed").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(seed) = seed_str.parse::<u64>() {
                traces.push((seed, read_trace_csv(&entry.path())?));
            }
        }
    }
    if traces.is_empty() {
        return Err(Error::precondition(format!(
            "no trace_seed*.csv files found in {}",
            dir.display()
        )));
    }
    traces.sort_by_key(|(seed, _)| *seed);
    Ok(traces)
}

/// Read the summary JSON from a results directory, if present.
pub fn load_summary(dir: impl AsRef<Path>) -> Result<Summary> {
    let path = dir.as_ref().join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("summary parse failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config_str;
    use crate::runner::run_experiment;

    fn result_set() -> ResultSet {
        let cfg = load_config_str(
            r#"{
            "environment": {"kind": "smoothed", "k": 3, "p": 5, "sigma": 0.4,
                            "strategy": {"kind": "equal_means"},
                            "noise": {"family": "gaussian", "kappa": 0.2}},
            "agent": {"algo": "single", "t_min": 4},
            "truth": {"mode": "single", "p": 5, "family": "l1", "sparsity": 2},
            "horizon": 48,
            "seeds": [1, 2]
        }"#,
        )
        .unwrap();
        run_experiment(&cfg).unwrap()
    }

    #[test]
    fn write_then_read_round_trips_exactly() {
        let rs = result_set();
        let dir = tempfile::tempdir().unwrap();
        let written = emit_results(&rs, dir.path()).unwrap();
        assert_eq!(written.len(), 3);

        for trace in &rs.traces {
            let path = dir.path().join(trace_file_name(trace.seed));
            let rounds = read_trace_csv(&path).unwrap();
            assert_eq!(rounds, trace.rounds);
        }
    }

    #[test]
    fn empty_result_set_rejected() {
        let mut rs = result_set();
        rs.traces.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&rs, dir.path()).is_err());
    }

    #[test]
    fn emitted_files_are_byte_identical_across_runs() {
        let rs1 = result_set();
        let rs2 = result_set();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        emit_results(&rs1, d1.path()).unwrap();
        emit_results(&rs2, d2.path()).unwrap();
        for name in [trace_file_name(1), trace_file_name(2), "summary.json".to_string()] {
            let a = std::fs::read(d1.path().join(&name)).unwrap();
            let b = std::fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn summary_json_has_schema_required_fields() {
        let rs = result_set();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&rs, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();

        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../schemas/summary.schema.json")).unwrap();
        for required in schema["required"].as_array().unwrap() {
            let key = required.as_str().unwrap();
            assert!(value.get(key).is_some(), "summary missing required field {key}");
        }
        assert!(value["config_echo"].is_object());
        assert!(value["slope_ci"].as_array().unwrap().len() == 2);
        assert!(value["final_regret_ci"].as_array().unwrap().len() == 2);
        // Round-trip through the typed summary.
        let summary = load_summary(dir.path()).unwrap();
        assert_eq!(summary.config_echo, rs.config);
    }

    #[test]
    fn traces_load_from_directory_sorted() {
        let rs = result_set();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&rs, dir.path()).unwrap();
        let loaded = load_traces_from_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, 1);
        assert_eq!(loaded[1].0, 2);
        assert_eq!(loaded[1].1, rs.traces[1].rounds);
    }
}
