//! Result files of one experiment.
//!
//! `answers.csv`, `summary.csv`, `errors.csv`, `failures.csv`,
//! `metadata.json` and, when repetition 0 succeeded, `synthetic.csv`
//! depend only on the manifest and seed. Wall time goes to `timing.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use longsynth_core::privacy::zcdp_to_approx_dp;
use longsynth_core::PrivacyBudget;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HarnessError, Result};
use crate::harness::{summarize, Calibration, Experiment, RepOutcome, RunManifest};
use crate::ingest::write_panel;

pub const SCHEMA_VERSION: u32 = 1;
/// δ at which the (ε, δ) equivalent is reported.
pub const REPORT_DELTA: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct QueryMeta<'a> {
    label: &'a str,
    t: usize,
    supported: bool,
}

#[derive(Debug, Serialize)]
struct FailureMeta {
    count: usize,
    observed_rate: f64,
    predicted_rate: f64,
    /// Two-sided 99% normal-approximation slack around `predicted_rate`.
    ci99_slack: f64,
}

#[derive(Debug, Serialize)]
struct Seeds {
    base: u64,
    repetition_rng: &'static str,
    data_stream: u64,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    schema: u32,
    tool: &'static str,
    version: &'static str,
    manifest: &'a RunManifest,
    n: usize,
    dropped_rows: usize,
    horizon: usize,
    rho: f64,
    epsilon: f64,
    delta: f64,
    calibration: &'a Calibration,
    debiasing: &'static str,
    seeds: Seeds,
    repetitions: usize,
    succeeded: usize,
    failures: FailureMeta,
    queries: Vec<QueryMeta<'a>>,
    synthetic_csv: Option<usize>,
}

/// Failure-count slack `z_{0.995}·sqrt(β(1−β)/reps)`.
pub fn binomial_slack99(beta: f64, reps: usize) -> f64 {
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.995);
    z * (beta * (1.0 - beta) / reps as f64).sqrt()
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let file =
        File::create(&path).map_err(|source| HarnessError::Write { path: path.clone(), source })?;
    Ok((path, BufWriter::new(file)))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let (_, file) = create(dir, name)?;
    Ok(csv::Writer::from_writer(file))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|source| HarnessError::Write { path: dir.to_owned(), source })?;

    let mut answers = csv_writer(dir, "answers.csv")?;
    answers.write_record(["query", "t", "repetition", "value"])?;
    for (rep, outcome) in exp.reps.iter().enumerate() {
        if let Some(r) = outcome.result() {
            for (q, v) in exp.queries.iter().zip(&r.answers) {
                answers.write_record([&q.label, &q.t().to_string(), &rep.to_string(), &v.to_string()])?;
            }
        }
    }
    answers.flush().map_err(csv::Error::from)?;

    let mut summary = csv_writer(dir, "summary.csv")?;
    summary.write_record([
        "query", "t", "truth", "mean", "std", "median", "p2_5", "p97_5", "median_abs_error",
        "reps", "supported",
    ])?;
    for row in summarize(exp) {
        summary.write_record([
            row.label,
            row.t.to_string(),
            row.truth.to_string(),
            row.mean.to_string(),
            row.std.to_string(),
            row.median.to_string(),
            row.p2_5.to_string(),
            row.p97_5.to_string(),
            row.median_abs_error.to_string(),
            row.reps.to_string(),
            row.supported.to_string(),
        ])?;
    }
    summary.flush().map_err(csv::Error::from)?;

    let mut errors = csv_writer(dir, "errors.csv")?;
    errors.write_record(["repetition", "metric", "t", "value"])?;
    for (rep, outcome) in exp.reps.iter().enumerate() {
        if let Some(r) = outcome.result() {
            for m in &r.metrics {
                errors.write_record([rep.to_string(), m.name.to_owned(), opt(m.t), m.value.to_string()])?;
            }
        }
    }
    errors.flush().map_err(csv::Error::from)?;

    let mut failures = csv_writer(dir, "failures.csv")?;
    failures.write_record(["repetition", "t", "suffix", "count"])?;
    for (rep, f) in exp.failures() {
        failures.write_record([rep.to_string(), f.t.to_string(), f.suffix.to_string(), f.count.to_string()])?;
    }
    failures.flush().map_err(csv::Error::from)?;

    if let Some(store) = &exp.first_store {
        let (_, file) = create(dir, "synthetic.csv")?;
        write_panel(store, file)?;
    }

    let (path, mut file) = create(dir, "metadata.json")?;
    serde_json::to_writer_pretty(&mut file, &metadata(exp)?)?;
    writeln!(file)
        .and_then(|_| file.flush())
        .map_err(|source| HarnessError::Write { path, source })?;
    Ok(())
}

fn metadata(exp: &Experiment) -> Result<Metadata<'_>> {
    let m = &exp.manifest;
    let failed = exp.reps.iter().filter(|r| matches!(r, RepOutcome::Failed(_))).count();
    Ok(Metadata {
        schema: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        manifest: m,
        n: exp.n,
        dropped_rows: exp.dropped_rows,
        horizon: exp.horizon,
        rho: m.rho,
        epsilon: zcdp_to_approx_dp(PrivacyBudget::new(m.rho)?, REPORT_DELTA)?,
        delta: REPORT_DELTA,
        calibration: &exp.calibration,
        debiasing: match exp.calibration {
            Calibration::Window { .. } => {
                "answer = (synthetic count - n_pad * padded bins covered) / (m - 2^k * n_pad)"
            }
            Calibration::Cumulative { .. } => "answer = synthetic count / m (no padding)",
        },
        seeds: Seeds {
            base: m.seed,
            repetition_rng: "ChaCha20 seeded from the base seed, stream = repetition index",
            data_stream: crate::harness::DATA_STREAM,
        },
        repetitions: exp.reps.len(),
        succeeded: exp.succeeded(),
        failures: FailureMeta {
            count: failed,
            observed_rate: failed as f64 / exp.reps.len() as f64,
            predicted_rate: m.beta_target,
            ci99_slack: binomial_slack99(m.beta_target, exp.reps.len()),
        },
        queries: exp
            .queries
            .iter()
            .zip(&exp.supported)
            .map(|(q, &supported)| QueryMeta { label: &q.label, t: q.t(), supported })
            .collect(),
        synthetic_csv: exp.first_store.as_ref().map(|_| 0),
    })
}

pub fn write_timing(dir: &Path, wall: Duration) -> Result<()> {
    let (path, mut file) = create(dir, "timing.json")?;
    let body = serde_json::json!({ "wall_seconds": wall.as_secs_f64() });
    writeln!(file, "{body}")
        .and_then(|_| file.flush())
        .map_err(|source| HarnessError::Write { path, source })
}
