use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use longsynth::error::{HarnessError, Result};
use longsynth::harness::{load_dataset, rep_rng, DataSource, Mode, RunManifest};
use longsynth::ingest::{ingest_csv, write_panel, CsvOptions};
use longsynth::output::{write_outputs, write_timing};
use longsynth::queries::{
    default_cumulative_queries, default_window_queries, expand, read_queries,
};
use longsynth::simulate::{simulate_dataset, SimKind};
use longsynth_core::cumulative::accuracy_of;
use longsynth_core::privacy::zcdp_to_approx_dp;
use longsynth_core::query::{debias_fraction, uniform_padding_weight, weighted_count};
use longsynth_core::window::{compute_error_bound, compute_n_pad, compute_relative_error_bound};
use longsynth_core::{BitPanel, PrivacyBudget, Support};

#[derive(Parser)]
#[command(name = "longsynth", version, about = "Private continual synthetic data for longitudinal bit panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize with the window synthesizer (preserves length-k windows).
    SynthWindow(SynthArgs),
    /// Synthesize with the cumulative synthesizer (preserves weight thresholds).
    SynthCumulative(SynthArgs),
    /// Write a simulated panel as CSV.
    Simulate(SimulateArgs),
    /// Evaluate queries on a CSV panel.
    Eval(EvalArgs),
    /// Print padding, error bounds and privacy conversion.
    Bound(BoundArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV panel: one row per individual, one column per round.
    #[arg(long, conflicts_with = "simulate")]
    input: Option<PathBuf>,
    /// The CSV has a header line.
    #[arg(long)]
    header: bool,
    /// Code values below this as 1 and the rest as 0.
    #[arg(long)]
    threshold: Option<f64>,
    /// Simulated input: all-ones, bernoulli:P, markov or markov:I,S,E.
    #[arg(long)]
    simulate: Option<String>,
    /// Population of the simulated input.
    #[arg(long, default_value_t = 25_000)]
    n: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Horizon; defaults to every round of the input.
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.005)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    beta_target: f64,
    /// Failure probability of the reported accuracy bounds.
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long)]
    n_pad: Option<u64>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON query list; defaults to every window or threshold query.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Disable all noise. The output is NOT private.
    #[arg(long)]
    noiseless: bool,
    /// Evaluate queries the synthesizer does not preserve, flagged unsupported.
    #[arg(long)]
    force_window: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "all-ones")]
    kind: String,
    #[arg(long, default_value_t = 25_000)]
    n: usize,
    #[arg(long = "T", default_value_t = 12)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    queries: PathBuf,
    /// Window length of the release; enables support checks and debiasing.
    #[arg(long)]
    k: Option<usize>,
    /// Padding of the release, subtracted when debiasing.
    #[arg(long, default_value_t = 0, requires = "k")]
    n_pad: u64,
    #[arg(long)]
    force_window: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    beta_target: f64,
    /// Population, for the relative and cumulative bounds.
    #[arg(long)]
    n: Option<usize>,
    /// Bin fraction C/n for the relative bound.
    #[arg(long, default_value_t = 0.0)]
    c_frac: f64,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
}

fn source(args: &InputArgs, horizon: Option<usize>) -> Result<DataSource> {
    match (&args.input, &args.simulate) {
        (Some(path), None) => Ok(DataSource::Csv {
            path: path.clone(),
            header: args.header,
            threshold: args.threshold,
        }),
        (None, Some(kind)) => Ok(DataSource::Simulated {
            kind: kind.parse()?,
            n: args.n,
            horizon: horizon.unwrap_or(12),
        }),
        _ => Err(HarnessError::input("give exactly one of --input or --simulate")),
    }
}

fn synth(mode: Mode, args: SynthArgs) -> Result<()> {
    let started = Instant::now();
    let manifest = RunManifest {
        mode,
        source: source(&args.input, args.horizon)?,
        horizon: args.horizon,
        k: args.k,
        rho: args.rho,
        beta_target: args.beta_target,
        beta: args.beta,
        n_pad: args.n_pad,
        reps: args.reps,
        seed: args.seed,
        noiseless: args.noiseless,
        force_window: args.force_window,
        queries: args.queries.clone(),
        out: args.out.clone(),
    };
    let (dataset, dropped) = load_dataset(&manifest.source, manifest.seed)?;
    let horizon = manifest.horizon.unwrap_or(dataset.t_max());
    let queries = match (&manifest.queries, mode) {
        (Some(path), _) => expand(&read_queries(path)?, horizon)?,
        (None, Mode::Window) => default_window_queries(manifest.k, horizon)?,
        (None, Mode::Cumulative) => default_cumulative_queries(horizon)?,
    };
    let exp = longsynth::run_experiment(&manifest, &dataset, queries, dropped)?;
    write_outputs(&exp, &manifest.out)?;
    write_timing(&manifest.out, started.elapsed())?;
    let failed = exp.reps.len() - exp.succeeded();
    eprintln!(
        "{} of {} repetitions succeeded ({failed} padding failures); results in {}",
        exp.succeeded(),
        exp.reps.len(),
        manifest.out.display()
    );
    if exp.succeeded() == 0 {
        return Err(HarnessError::AllFailed(exp.reps.len()));
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let kind: SimKind = args.kind.parse()?;
    let mut rng = rep_rng(args.seed, longsynth::harness::DATA_STREAM);
    let ds = simulate_dataset(kind, args.n, args.horizon, &mut rng)?;
    let file = std::fs::File::create(&args.out)
        .map_err(|source| HarnessError::Write { path: args.out.clone(), source })?;
    write_panel(&ds, std::io::BufWriter::new(file))
}

fn eval(args: EvalArgs) -> Result<()> {
    let opts = CsvOptions { header: args.header, threshold: args.threshold };
    let got = ingest_csv(&args.input, &opts)?;
    let panel = &got.dataset;
    let queries = expand(&read_queries(&args.queries)?, panel.rounds())?;
    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    out.write_record(["query", "t", "value", "supported"])?;
    for q in &queries {
        let (value, supported) = match args.k {
            None => (weighted_count(panel, &q.spec)? / panel.population() as f64, true),
            Some(k) => {
                let supported = match (Support::Window { k }).check(&q.spec) {
                    Ok(()) => true,
                    Err(_) if args.force_window => false,
                    Err(e) => return Err(HarnessError::input(format!("{}: {e}", q.label))),
                };
                let pad = args.n_pad as f64 * uniform_padding_weight(&q.spec, k);
                let n_hat = panel.population() as i64 - (1i64 << k) * args.n_pad as i64;
                if n_hat < 1 {
                    return Err(HarnessError::input("padding exceeds the panel size"));
                }
                let raw = weighted_count(panel, &q.spec)?;
                (debias_fraction(raw, pad, n_hat as usize)?, supported)
            }
        };
        out.write_record([&q.label, &q.t().to_string(), &value.to_string(), &supported.to_string()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    if got.dropped > 0 {
        eprintln!("dropped {} rows with missing cells", got.dropped);
    }
    Ok(())
}

fn bound(args: BoundArgs) -> Result<()> {
    let rho = PrivacyBudget::new(args.rho)?;
    println!("n_pad = {}", compute_n_pad(args.horizon, args.k, args.rho, args.beta_target)?);
    println!(
        "additive_bound = {}",
        compute_error_bound(args.horizon, args.k, args.rho, args.beta)?
    );
    println!("epsilon = {} (delta = {})", zcdp_to_approx_dp(rho, args.delta)?, args.delta);
    if let Some(n) = args.n {
        let rel = compute_relative_error_bound(args.horizon, args.k, args.rho, args.beta, n, args.c_frac)?;
        println!("relative_bound = {rel} (c_frac = {})", args.c_frac);
        let (alpha, beta_star) = accuracy_of(args.horizon, rho, n, args.beta)?;
        println!("cumulative_alpha = {alpha} (beta = {beta_star})");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthWindow(a) => synth(Mode::Window, a),
        Command::SynthCumulative(a) => synth(Mode::Cumulative, a),
        Command::Simulate(a) => simulate(a),
        Command::Eval(a) => eval(a),
        Command::Bound(a) => bound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
