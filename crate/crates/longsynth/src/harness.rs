//! Repeated synthesizer runs against one ground-truth panel.

use std::path::PathBuf;

use longsynth_core::cumulative::accuracy_of;
use longsynth_core::model::true_cumulative_counts;
use longsynth_core::query::{
    debias_fraction, eval_query, max_error_report, uniform_padding_weight, weighted_count,
    WindowBoundParams,
};
use longsynth_core::window::compute_error_bound;
use longsynth_core::{
    CumulativeSynthConfig, CumulativeSynthesizer, Error as CoreError,
    LongitudinalDataset, PaddingFailure, PrivacyBudget, Support, SyntheticStore,
    WindowSynthConfig, WindowSynthesizer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::ingest::{ingest_csv, CsvOptions};
use crate::queries::NamedQuery;
use crate::simulate::{simulate_dataset, SimKind};

/// RNG stream reserved for simulating the input panel.
pub const DATA_STREAM: u64 = u64::MAX;

/// Generator for repetition `rep`: ChaCha20 keyed by the base seed, one
/// stream per repetition.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Window,
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, header: bool, threshold: Option<f64> },
    Simulated { kind: SimKind, n: usize, horizon: usize },
}

/// Everything that determines a run. Echoed into `metadata.json`, except
/// the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub source: DataSource,
    /// Defaults to every round of the input.
    pub horizon: Option<usize>,
    /// Window length; ignored in cumulative mode.
    pub k: usize,
    pub rho: f64,
    pub beta_target: f64,
    /// Failure probability the reported accuracy bounds are stated for.
    pub beta: f64,
    pub n_pad: Option<u64>,
    pub reps: usize,
    pub seed: u64,
    pub noiseless: bool,
    pub force_window: bool,
    pub queries: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunManifest {
    pub fn new(mode: Mode, source: DataSource) -> Self {
        Self {
            mode,
            source,
            horizon: None,
            k: 3,
            rho: 0.005,
            beta_target: 0.05,
            beta: 0.05,
            n_pad: None,
            reps: 1,
            seed: 0,
            noiseless: false,
            force_window: false,
            queries: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Loads or simulates the panel named by `source`; returns it with the
/// number of rows dropped for missing cells.
pub fn load_dataset(source: &DataSource, seed: u64) -> Result<(LongitudinalDataset, usize)> {
    match source {
        DataSource::Csv { path, header, threshold } => {
            let got = ingest_csv(path, &CsvOptions { header: *header, threshold: *threshold })?;
            Ok((got.dataset, got.dropped))
        }
        DataSource::Simulated { kind, n, horizon } => {
            let mut rng = rep_rng(seed, DATA_STREAM);
            Ok((simulate_dataset(*kind, *n, *horizon, &mut rng)?, 0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: &'static str,
    pub t: Option<usize>,
    pub value: f64,
}

impl Metric {
    fn global(name: &'static str, value: f64) -> Self {
        Metric { name, t: None, value }
    }

    fn at(name: &'static str, t: usize, value: f64) -> Self {
        Metric { name, t: Some(t), value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub m: usize,
    /// One answer per query, debiased in window mode.
    pub answers: Vec<f64>,
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepOutcome {
    Done(RepResult),
    Failed(PaddingFailure),
}

impl RepOutcome {
    pub fn result(&self) -> Option<&RepResult> {
        match self {
            RepOutcome::Done(r) => Some(r),
            RepOutcome::Failed(_) => None,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.result()?.metrics.iter().find(|m| m.name == name && m.t.is_none()).map(|m| m.value)
    }
}

/// Mechanism-level quantities shared by every repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Calibration {
    Window {
        k: usize,
        n_pad: u64,
        /// Per-bin discrete Gaussian variance as an exact fraction.
        sigma2: String,
        per_step_rho: f64,
        additive_bound: f64,
        debiased_bound: f64,
    },
    Cumulative {
        counter: &'static str,
        schedule: Vec<f64>,
        alpha_star: f64,
        beta_star: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub manifest: RunManifest,
    pub n: usize,
    pub horizon: usize,
    pub dropped_rows: usize,
    pub calibration: Calibration,
    pub queries: Vec<NamedQuery>,
    pub supported: Vec<bool>,
    pub truth: Vec<f64>,
    pub reps: Vec<RepOutcome>,
    /// Synthetic records of repetition 0, when it succeeded.
    pub first_store: Option<SyntheticStore>,
}

impl Experiment {
    pub fn succeeded(&self) -> usize {
        self.reps.iter().filter(|r| r.result().is_some()).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &PaddingFailure)> {
        self.reps.iter().enumerate().filter_map(|(i, r)| match r {
            RepOutcome::Failed(f) => Some((i, f)),
            RepOutcome::Done(_) => None,
        })
    }
}

fn budget(rho: f64) -> Result<PrivacyBudget> {
    Ok(PrivacyBudget::new(rho)?)
}

/// Runs `manifest.reps` independent repetitions in parallel.
///
/// Padding failures are recorded per repetition; they do not stop the
/// sweep. Queries the synthesizer does not preserve are refused unless
/// `force_window` is set, in which case they are flagged unsupported.
pub fn run_experiment(
    manifest: &RunManifest,
    dataset: &LongitudinalDataset,
    queries: Vec<NamedQuery>,
    dropped_rows: usize,
) -> Result<Experiment> {
    let horizon = manifest.horizon.unwrap_or(dataset.t_max());
    if horizon == 0 || horizon > dataset.t_max() {
        return Err(HarnessError::input(format!(
            "horizon {horizon} must lie in 1..={}",
            dataset.t_max()
        )));
    }
    if manifest.reps == 0 {
        return Err(HarnessError::input("at least one repetition is needed"));
    }
    let dataset = dataset.prefix(horizon)?;
    let support = match manifest.mode {
        Mode::Window => Support::Window { k: manifest.k },
        Mode::Cumulative => Support::Cumulative,
    };
    let mut supported = Vec::with_capacity(queries.len());
    for q in &queries {
        if q.t() > horizon {
            return Err(HarnessError::input(format!("query {} at t={} is past T", q.label, q.t())));
        }
        match support.check(&q.spec) {
            Ok(()) => supported.push(true),
            Err(_) if manifest.force_window => supported.push(false),
            Err(e) => return Err(HarnessError::input(format!("query {} at t={}: {e}", q.label, q.t()))),
        }
    }
    let truth = queries
        .iter()
        .map(|q| eval_query(&dataset, &q.spec))
        .collect::<Result<Vec<_>, _>>()?;

    let (calibration, reps, first_store) = match manifest.mode {
        Mode::Window => run_window(manifest, &dataset, horizon, &queries)?,
        Mode::Cumulative => run_cumulative(manifest, &dataset, horizon, &queries)?,
    };
    Ok(Experiment {
        manifest: manifest.clone(),
        n: dataset.n(),
        horizon,
        dropped_rows,
        calibration,
        queries,
        supported,
        truth,
        reps,
        first_store,
    })
}

type Runs = (Calibration, Vec<RepOutcome>, Option<SyntheticStore>);

fn run_window(
    manifest: &RunManifest,
    dataset: &LongitudinalDataset,
    horizon: usize,
    queries: &[NamedQuery],
) -> Result<Runs> {
    let k = manifest.k;
    let mut cfg = WindowSynthConfig::new(horizon, k, budget(manifest.rho)?, manifest.beta_target);
    // without noise there is nothing to pad against
    match (manifest.n_pad, manifest.noiseless) {
        (Some(n_pad), _) => cfg = cfg.with_n_pad(n_pad),
        (None, true) => cfg = cfg.with_n_pad(0),
        (None, false) => {}
    }
    if manifest.noiseless {
        cfg = cfg.noiseless();
    }
    cfg.validate()?;
    let n_pad = cfg.resolved_n_pad()?;
    let scale = cfg.noise_scale()?;
    let additive_bound = if manifest.noiseless {
        0.0
    } else {
        compute_error_bound(horizon, k, manifest.rho, manifest.beta)?
    };
    let params = WindowBoundParams { horizon, k, rho: manifest.rho, n_pad, beta: manifest.beta };
    let padding: Vec<f64> =
        queries.iter().map(|q| n_pad as f64 * uniform_padding_weight(&q.spec, k)).collect();

    let outcomes = (0..manifest.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(manifest.seed, rep as u64);
            let synth = match WindowSynthesizer::run(dataset, cfg.clone(), &mut rng) {
                Ok(s) => s,
                Err(CoreError::PaddingExhausted(f)) => return Ok((RepOutcome::Failed(f), None)),
                Err(e) => return Err(HarnessError::from(e)),
            };
            let n_hat = synth.estimated_population().max(1) as usize;
            let store = synth.store();
            let answers = queries
                .iter()
                .zip(&padding)
                .map(|(q, &pad)| Ok(debias_fraction(weighted_count(store, &q.spec)?, pad, n_hat)?))
                .collect::<Result<Vec<f64>>>()?;
            let report = max_error_report(dataset, store, params)?;
            let mut metrics = vec![
                Metric::global("max_additive", report.max_additive as f64),
                Metric::global("max_relative", report.max_relative),
                Metric::global("max_debiased", report.max_debiased),
                Metric::global("max_relative_ratio", report.max_relative_ratio),
                Metric::global("min_count", synth.min_count() as f64),
                Metric::global("m", store.m() as f64),
            ];
            for r in &report.rounds {
                metrics.push(Metric::at("max_additive", r.t, r.additive as f64));
                metrics.push(Metric::at("max_debiased", r.t, r.debiased));
            }
            let result = RepResult { m: store.m(), answers, metrics };
            let keep = (rep == 0).then(|| synth.into_store());
            Ok((RepOutcome::Done(result), keep))
        })
        .collect::<Result<Vec<_>>>()?;

    let calibration = Calibration::Window {
        k,
        n_pad,
        sigma2: format!("{}/{}", scale.numer(), scale.denom()),
        per_step_rho: cfg.per_step_rho().rho(),
        additive_bound,
        debiased_bound: additive_bound / dataset.n() as f64,
    };
    Ok(split_first_store(calibration, outcomes))
}

fn split_first_store(
    calibration: Calibration,
    outcomes: Vec<(RepOutcome, Option<SyntheticStore>)>,
) -> Runs {
    let mut first = None;
    let reps = outcomes
        .into_iter()
        .map(|(outcome, store)| {
            if store.is_some() {
                first = store;
            }
            outcome
        })
        .collect();
    (calibration, reps, first)
}

fn run_cumulative(
    manifest: &RunManifest,
    dataset: &LongitudinalDataset,
    horizon: usize,
    queries: &[NamedQuery],
) -> Result<Runs> {
    let rho = budget(manifest.rho)?;
    let mut cfg = CumulativeSynthConfig::new(horizon, rho)?;
    if manifest.noiseless {
        cfg = cfg.noiseless();
    }
    let truth_counts = (1..=horizon)
        .map(|t| true_cumulative_counts(dataset, t))
        .collect::<Result<Vec<_>, _>>()?;

    let outcomes = (0..manifest.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(manifest.seed, rep as u64);
            let synth = CumulativeSynthesizer::run(dataset, cfg.clone(), &mut rng)?;
            let store = synth.store();
            let answers = queries
                .iter()
                .map(|q| eval_query(store, &q.spec))
                .collect::<Result<Vec<f64>, _>>()?;
            let (mut worst, mut worst_raw) = (0i64, 0i64);
            let mut metrics = Vec::new();
            for (t, truth) in (1..=horizon).zip(&truth_counts) {
                let mut round_worst = 0i64;
                for (b, &s) in truth.iter().enumerate().take(t + 1).skip(1) {
                    let s = s as i64;
                    round_worst = round_worst.max((synth.bank().get(b, t).unwrap_or(0) - s).abs());
                    if let Some(noisy) = synth.noisy_count(b, t) {
                        worst_raw = worst_raw.max((noisy - s).abs());
                    }
                }
                worst = worst.max(round_worst);
                metrics.push(Metric::at("max_error", t, round_worst as f64));
            }
            metrics.insert(0, Metric::global("max_raw_error", worst_raw as f64));
            metrics.insert(0, Metric::global("max_error", worst as f64));
            let result = RepResult { m: store.m(), answers, metrics };
            let keep = (rep == 0).then(|| synth.into_store());
            Ok((RepOutcome::Done(result), keep))
        })
        .collect::<Result<Vec<_>>>()?;

    let (alpha_star, beta_star) = if manifest.noiseless {
        (0.0, 0.0)
    } else {
        accuracy_of(horizon, rho, dataset.n(), manifest.beta)?
    };
    let calibration = Calibration::Cumulative {
        counter: cfg.counter.name(),
        schedule: cfg.schedule.shares().to_vec(),
        alpha_star,
        beta_star,
    };
    Ok(split_first_store(calibration, outcomes))
}

/// Per-query distribution of answers over successful repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub t: usize,
    pub truth: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub median_abs_error: f64,
    pub reps: usize,
    pub supported: bool,
}

pub fn summarize(exp: &Experiment) -> Vec<SummaryRow> {
    use statrs::statistics::{Data, OrderStatistics, Statistics};

    exp.queries
        .iter()
        .enumerate()
        .map(|(j, q)| {
            let values: Vec<f64> =
                exp.reps.iter().filter_map(|r| r.result()).map(|r| r.answers[j]).collect();
            let truth = exp.truth[j];
            let errors: Vec<f64> = values.iter().map(|v| (v - truth).abs()).collect();
            let mut data = Data::new(values.clone());
            SummaryRow {
                label: q.label.clone(),
                t: q.t(),
                truth,
                mean: values.iter().mean(),
                std: values.iter().std_dev(),
                median: data.median(),
                p2_5: data.quantile(0.025),
                p97_5: data.quantile(0.975),
                median_abs_error: Data::new(errors).median(),
                reps: values.len(),
                supported: exp.supported[j],
            }
        })
        .collect()
}
