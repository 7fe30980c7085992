//! `cotdr`: simulate and analyse correlation-OTDR latency measurements.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cotdr::config::ExperimentConfig;
use cotdr::correlate::TimeWindow;
use cotdr::experiment::{calibrate_noise, FailedRun, Instrument};
use cotdr::golay::{GolayPair, SequenceId};
use cotdr::report::{self, MeasurementReport, VerificationReport};
use cotdr::tracefile::TraceRecord;
use cotdr::{export, Error};
use serde::{Deserialize, Serialize};

const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "cotdr", version, about = "Correlation-OTDR fiber latency simulator")]
struct Cli {
    /// Worker threads for parallel loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate averaged A/B traces for each run and write them as COTR files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of runs in the config.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Measure round-trip latency from stored traces.
    Measure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the drift and repeatability study.
    Repeatability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare round-trip/2 with a direct single-pass measurement.
    VerifySinglePass {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Export a trace or a correlogram as CSV.
    Export(ExportArgs),
    /// Print a Golay pair as two lines of chips.
    Golay {
        #[arg(long)]
        order: u32,
    },
    /// Find the single-shot noise giving a target round-trip scatter.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Target round-trip standard deviation in picoseconds.
        #[arg(long, default_value_t = 12.0)]
        target_ps: f64,
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
}

#[derive(Args)]
struct ExportArgs {
    /// COTR trace (sequence A when exporting a correlogram).
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    /// Export the pair correlogram of `--trace` and `--trace-b`.
    #[arg(long, requires_all = ["trace_b", "config"])]
    correlogram: bool,
    #[arg(long)]
    trace_b: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window start in seconds.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    /// Window end in seconds.
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    runs: Vec<ManifestRun>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRun {
    run: usize,
    timestamp: f64,
    temperature_offset: f64,
    seed: u64,
    trace_a: String,
    trace_b: String,
}

enum Failure {
    Config(String),
    Io(String),
    Measurement(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Measurement(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Measurement(m) => m,
        }
    }

    fn from_core(e: Error, path: Option<&Path>) -> Self {
        let at = path.map(|p| format!("{}: ", p.display())).unwrap_or_default();
        match e {
            Error::Json(j) => Failure::Config(json_message(path, &j)),
            Error::Config(_) | Error::SizeLimit(_) | Error::Range(_) => Failure::Config(format!("{at}{e}")),
            Error::Io(_) | Error::Format(_) => Failure::Io(format!("{at}{e}")),
            _ => Failure::Measurement(e.to_string()),
        }
    }
}

/// `file:line:col: message`.
fn json_message(path: Option<&Path>, e: &serde_json::Error) -> String {
    let text = e.to_string();
    let suffix = format!(" at line {} column {}", e.line(), e.column());
    let msg = text.strip_suffix(&suffix).unwrap_or(&text);
    let file = path.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
    format!("{file}:{}:{}: {msg}", e.line(), e.column())
}

type CliResult<T> = Result<T, Failure>;

fn core<T>(r: cotdr::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::from_core(e, None))
}

fn at<T>(path: &Path, r: cotdr::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::from_core(e, Some(path)))
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = io(path, fs::read_to_string(path))?;
    at(path, ExperimentConfig::from_json(&text))
}

fn simulate(config: &Path, out: &Path, runs: Option<usize>) -> CliResult<()> {
    let cfg = load_config(config)?;
    let runs = runs.unwrap_or(cfg.runs);
    let instrument = core(Instrument::new(cfg))?;
    io(out, fs::create_dir_all(out))?;
    let mut manifest = Manifest { runs: Vec::new() };
    for run in 0..runs {
        let timestamp = run as f64 * instrument.config().interval;
        let seed = core(instrument.config().seeds.seed(run))?;
        let (a, b, temperature_offset) = core(instrument.acquire_at(timestamp, seed))?;
        let entry = ManifestRun {
            run,
            timestamp,
            temperature_offset,
            seed,
            trace_a: format!("run_{run:03}_A.cotr"),
            trace_b: format!("run_{run:03}_B.cotr"),
        };
        for (trace, name, id) in [(&a, &entry.trace_a, SequenceId::A), (&b, &entry.trace_b, SequenceId::B)] {
            let path = out.join(name);
            at(&path, TraceRecord::from_trace(trace, Some(id)).save(&path))?;
        }
        log::info!("run {run}: t = {timestamp:.0} s, dT = {temperature_offset:.4} K");
        manifest.runs.push(entry);
    }
    let path = out.join(MANIFEST);
    at(&path, report::write_json(&path, &manifest))?;
    println!("wrote {runs} runs to {}", out.display());
    Ok(())
}

fn load_trace(path: &Path) -> CliResult<cotdr::channel::Trace> {
    at(path, TraceRecord::load(path).and_then(|r| r.to_trace()))
}

fn measure(config: &Path, traces: &Path, report_path: &Path) -> CliResult<()> {
    let instrument = core(Instrument::new(load_config(config)?))?;
    let manifest_path = traces.join(MANIFEST);
    let text = io(&manifest_path, fs::read_to_string(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Io(json_message(Some(&manifest_path), &e)))?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for run in &manifest.runs {
        let a = load_trace(&traces.join(&run.trace_a))?;
        let b = load_trace(&traces.join(&run.trace_b))?;
        match instrument.analyze(&a, &b, run.timestamp, run.temperature_offset, run.seed, cotdr::Execution::default()) {
            Ok(r) => {
                println!("run {:3}: round trip {:.6} us", run.run, r.round_trip * 1e6);
                results.push(r)
            }
            Err(e) => {
                log::warn!("run {}: {e}", run.run);
                failures.push(FailedRun {
                    run: run.run,
                    timestamp: run.timestamp,
                    error: e.to_string(),
                });
            }
        }
    }
    if results.is_empty() {
        return Err(Failure::Measurement(format!(
            "no run could be measured ({} failures)",
            failures.len()
        )));
    }
    let rep = MeasurementReport {
        results,
        failures,
        settings: instrument.settings(),
    };
    at(
        report_path,
        report::save_with_csv(report_path, &rep, |w| report::write_measurements_csv(w, &rep.results)),
    )
}

fn repeatability(config: &Path, report_path: &Path) -> CliResult<()> {
    let instrument = core(Instrument::new(load_config(config)?))?;
    let rep = core(instrument.run_repeatability())?;
    println!(
        "{} runs, drift {:.1} ps, residual std {:.2} ps",
        rep.results.len(),
        rep.total_drift * 1e12,
        rep.residual_std * 1e12
    );
    at(
        report_path,
        report::save_with_csv(report_path, &rep, |w| report::write_repeatability_csv(w, &rep)),
    )
}

fn verify_single_pass(config: &Path, report_path: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let pairs = cfg.single_pass_pairs;
    let instrument = core(Instrument::new(cfg))?;
    let rep = VerificationReport::new(core(instrument.compare_single_pass(pairs))?, instrument.settings());
    for c in &rep.comparisons {
        println!(
            "round trip/2 {:.6} us, single pass {:.6} us, difference {:.2} ps",
            c.round_trip.round_trip / 2e-6,
            c.single_pass.one_way * 1e6,
            c.difference * 1e12
        );
    }
    at(
        report_path,
        report::save_with_csv(report_path, &rep, |w| report::write_verification_csv(w, &rep)),
    )
}

fn export_csv(args: &ExportArgs) -> CliResult<()> {
    let window = match (args.from, args.to) {
        (None, None) => None,
        (from, to) => Some(TimeWindow::new(from.unwrap_or(f64::NEG_INFINITY), to.unwrap_or(f64::INFINITY))),
    };
    let a = load_trace(&args.trace)?;
    let out = io(&args.csv, File::create(&args.csv))?;
    let out = BufWriter::new(out);
    if args.correlogram {
        let (Some(b_path), Some(config)) = (&args.trace_b, &args.config) else {
            return Err(Failure::Config("--correlogram needs --trace-b and --config".into()));
        };
        let b = load_trace(b_path)?;
        let instrument = core(Instrument::new(load_config(config)?))?;
        let corr = core(instrument.correlator().correlate(&a, &b, cotdr::Execution::default()))?;
        at(&args.csv, export::write_correlogram_csv(out, &corr, window))
    } else {
        at(&args.csv, export::write_trace_csv(out, &a, window))
    }
}

fn calibrate(config: &Path, target_ps: f64, runs: usize) -> CliResult<()> {
    let cfg = load_config(config)?;
    let cal = core(calibrate_noise(&cfg, target_ps * 1e-12, runs))?;
    println!("{}", serde_json::to_string_pretty(&cal).expect("serializable"));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, runs } => simulate(&config, &out, runs),
        Command::Measure { config, traces, report } => measure(&config, &traces, &report),
        Command::Repeatability { config, report } => repeatability(&config, &report),
        Command::VerifySinglePass { config, report } => verify_single_pass(&config, &report),
        Command::Export(args) => export_csv(&args),
        Command::Golay { order } => {
            print!("{}", core(GolayPair::generate(order))?);
            Ok(())
        }
        Command::Calibrate { config, target_ps, runs } => calibrate(&config, target_ps, runs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match cotdr::exec::with_jobs(jobs, move || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
