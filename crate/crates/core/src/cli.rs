//! `boscids` command line.
//!
//! Parameters resolve in three layers: built-in defaults, then a
//! `key=value` config file (`--config`, or `$BOSCIDS_CONFIG`), then flags.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{
    Config, DEFAULT_DETECT_FRACTION, DEFAULT_EPOCH_SIZE, DEFAULT_TRAIN_THRESHOLD, DEFAULT_WINDOW,
};
use crate::detector::{detect, DetectionReport};
use crate::error::{Error, Result};
use crate::evaluator::{compute_metrics, read_labels, write_labels, Granularity, LabeledCorpus};
use crate::ingest::{count_table, ingest_reader, CountTable, RawTrace};
use crate::synth::{gen_anomalous, gen_normal, InjectionMode, InjectionSpec, SourceSpec};
use crate::trainer::{train, TrainedModel};

pub const CONFIG_ENV: &str = "BOSCIDS_CONFIG";

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const ERROR: u8 = 1;
    pub const ANOMALY: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "boscids", version, about = "Bag-of-system-calls anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split strace output into a trace file and a count file
    Ingest(IngestArgs),
    /// Learn a normal-behavior model from a trace
    Train(TrainArgs),
    /// Scan traces against a model and report anomalous epochs
    Detect(DetectArgs),
    /// Detect over labeled traces and print TPR/FPR
    Eval(EvalArgs),
    /// Generate a synthetic trace with epoch labels
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Sliding window size
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Calls per epoch
    #[arg(long = "epoch-size", default_value_t = DEFAULT_EPOCH_SIZE)]
    pub epoch_size: usize,
    /// Cosine-similarity threshold for stopping training
    #[arg(long = "train-threshold", default_value_t = DEFAULT_TRAIN_THRESHOLD)]
    pub train_threshold: f64,
    /// Mismatch threshold as a fraction of the epoch length
    #[arg(long = "detect-fraction", default_value_t = DEFAULT_DETECT_FRACTION)]
    pub detect_fraction: f64,
    /// key=value config file (default: $BOSCIDS_CONFIG)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// strace output file, `-` for stdin
    pub input: PathBuf,
    /// Where to write the trace file (one name per line)
    #[arg(long = "trace-out")]
    pub trace_out: PathBuf,
    /// Where to write the count file (name<TAB>count)
    #[arg(long = "counts-out")]
    pub counts_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trace file to learn from
    #[arg(long)]
    pub trace: PathBuf,
    /// Count file; recomputed from the trace when omitted
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Treat the trace as raw strace output
    #[arg(long)]
    pub strace: bool,
    /// Output model file
    #[arg(long)]
    pub model: PathBuf,
    /// Write the per-epoch similarity log here instead of stderr
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Model file
    #[arg(long)]
    pub model: PathBuf,
    /// Trace files to scan
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Treat traces as raw strace output
    #[arg(long)]
    pub strace: bool,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads across input traces
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file
    #[arg(long)]
    pub model: PathBuf,
    /// Trace file; repeat together with --labels
    #[arg(long = "trace", required = true)]
    pub traces: Vec<PathBuf>,
    /// Label file for the trace at the same position
    #[arg(long, required = true)]
    pub labels: Vec<PathBuf>,
    /// Count epochs or windows
    #[arg(long, default_value = "epoch", value_parser = ["epoch", "window"])]
    pub granularity: String,
    /// Worker threads across input traces
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output trace file
    #[arg(long)]
    pub out: PathBuf,
    /// Output label file
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Total calls to generate
    #[arg(long)]
    pub calls: usize,
    /// Seed of the walk (and of the source, unless --source-seed is given)
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Seed of the transition matrix, to draw fresh walks from one source
    #[arg(long = "source-seed")]
    pub source_seed: Option<u64>,
    /// Alphabet size
    #[arg(long, default_value_t = 64)]
    pub alphabet: usize,
    /// Zipf exponent of name popularity
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    /// Comma-separated epoch indices to inject into
    #[arg(long, value_delimiter = ',')]
    pub inject: Vec<usize>,
    /// Injection mode
    #[arg(long, default_value = "burst_repeat",
          value_parser = ["novel_names", "shuffled_transitions", "burst_repeat"])]
    pub mode: String,
    /// Fraction of each injected epoch to overwrite
    #[arg(long, default_value_t = 0.5)]
    pub intensity: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Overrides read from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub window: Option<usize>,
    pub epoch_size: Option<usize>,
    pub train_threshold: Option<f64>,
    pub detect_fraction: Option<f64>,
}

impl ConfigFile {
    /// `key=value` lines; `#` starts a comment. Keys match the flag names.
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = ConfigFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!("config line {}: expected key=value", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |field: &'static str| Error::config(field, format!("cannot parse {value:?}"));
            match key.replace('_', "-").as_str() {
                "window" => file.window = Some(value.parse().map_err(|_| bad("window"))?),
                "epoch-size" => {
                    file.epoch_size = Some(value.parse().map_err(|_| bad("epoch-size"))?)
                }
                "train-threshold" => {
                    file.train_threshold = Some(value.parse().map_err(|_| bad("train-threshold"))?)
                }
                "detect-fraction" => {
                    file.detect_fraction = Some(value.parse().map_err(|_| bad("detect-fraction"))?)
                }
                _ => {
                    return Err(Error::Input(format!(
                        "config line {}: unknown key {key:?}",
                        n + 1
                    )))
                }
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Layers defaults, config file and explicit flags. Returns the resolved
/// config and whether the detection fraction was set anywhere explicitly.
fn resolve_config(args: &ConfigArgs, matches: &ArgMatches) -> Result<(Config, bool)> {
    let path = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let file = match path {
        Some(p) => ConfigFile::load(&p)?,
        None => ConfigFile::default(),
    };
    let from_cli = |id: &str| matches.value_source(id) == Some(ValueSource::CommandLine);
    fn pick<T>(on_cli: bool, flag: T, file: Option<T>, default: T) -> T {
        if on_cli {
            flag
        } else {
            file.unwrap_or(default)
        }
    }
    let config = Config {
        window: pick(from_cli("window"), args.window, file.window, DEFAULT_WINDOW),
        epoch_size: pick(from_cli("epoch_size"), args.epoch_size, file.epoch_size, DEFAULT_EPOCH_SIZE),
        train_threshold: pick(
            from_cli("train_threshold"),
            args.train_threshold,
            file.train_threshold,
            DEFAULT_TRAIN_THRESHOLD,
        ),
        detect_fraction: pick(
            from_cli("detect_fraction"),
            args.detect_fraction,
            file.detect_fraction,
            DEFAULT_DETECT_FRACTION,
        ),
    };
    config.validate()?;
    let fraction_set = from_cli("detect_fraction") || file.detect_fraction.is_some();
    Ok((config, fraction_set))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path)
        .map_err(|e| Error::Input(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

fn read_trace(path: &Path, strace: bool) -> Result<RawTrace> {
    let source = path.display().to_string();
    if strace {
        ingest_reader(open(path)?, &source)
    } else {
        RawTrace::read_from(open(path)?, &source)
    }
}

fn load_model(path: &Path, config: &ConfigArgs, matches: &ArgMatches) -> Result<TrainedModel> {
    let model = TrainedModel::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("cannot read model {}: {io}", path.display())),
        other => other,
    })?;
    let (resolved, fraction_set) = resolve_config(config, matches)?;
    if fraction_set {
        model.with_detect_fraction(resolved.detect_fraction)
    } else {
        Ok(model)
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))
}

fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<u8> {
    let trace = if args.input.as_os_str() == "-" {
        ingest_reader(io::stdin().lock(), "<stdin>")?
    } else {
        ingest_reader(open(&args.input)?, &args.input.display().to_string())?
    };
    let counts = count_table(&trace);
    trace.write_to(create(&args.trace_out)?)?;
    counts.write_to(create(&args.counts_out)?)?;
    writeln!(
        out,
        "calls={} distinct={} lines={} garbage={}",
        trace.len(),
        counts.len(),
        trace.meta.lines,
        trace.meta.garbage
    )?;
    Ok(exit::OK)
}

fn cmd_train(args: &TrainArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<u8> {
    let (config, _) = resolve_config(&args.config, matches)?;
    let trace = read_trace(&args.trace, args.strace)?;
    let counts = match &args.counts {
        Some(path) => CountTable::read_from(open(path)?, &path.display().to_string())?,
        None => count_table(&trace),
    };
    let model = train(&trace, &counts, config)?;
    model.save(&args.model)?;

    let mut log: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stderr()),
    };
    writeln!(log, "# k cos_theta")?;
    for rec in model.history() {
        writeln!(log, "{} {:.9}", rec.k, rec.cos_theta)?;
    }
    log.flush()?;

    writeln!(
        out,
        "converged={} epochs={} calls={} entries={} retained={} ns={}",
        model.converged(),
        model.epochs_trained(),
        model.calls_trained(),
        model.db().len(),
        model.index().retained(),
        model.index().n_s()
    )?;
    Ok(if model.converged() {
        exit::OK
    } else {
        exit::NOT_CONVERGED
    })
}

fn detect_all(
    model: &TrainedModel,
    traces: &[PathBuf],
    strace: bool,
    jobs: usize,
) -> Result<Vec<(String, DetectionReport)>> {
    thread_pool(jobs)?.install(|| {
        traces
            .par_iter()
            .map(|path| {
                let trace = read_trace(path, strace)?;
                Ok((path.display().to_string(), detect(model, &trace)))
            })
            .collect()
    })
}

fn cmd_detect(args: &DetectArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<u8> {
    let model = load_model(&args.model, &args.config, matches)?;
    let reports = detect_all(&model, &args.traces, args.strace, args.jobs)?;
    if let Some((id, _)) = reports.iter().find(|(_, r)| r.is_empty()) {
        return Err(Error::Input(format!("{id}: trace is empty or shorter than one window")));
    }
    let mut sink: Box<dyn Write + '_> = match &args.report {
        Some(path) => Box::new(create(path)?),
        None => Box::new(&mut *out),
    };
    let multiple = reports.len() > 1;
    for (id, report) in &reports {
        if multiple {
            writeln!(sink, "# trace {id}")?;
        }
        report.write_to(&mut sink)?;
    }
    sink.flush()?;
    Ok(if reports.iter().any(|(_, r)| r.trace_anomalous) {
        exit::ANOMALY
    } else {
        exit::OK
    })
}

fn cmd_eval(args: &EvalArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<u8> {
    if args.traces.len() != args.labels.len() {
        return Err(Error::Input(format!(
            "{} --trace but {} --labels",
            args.traces.len(),
            args.labels.len()
        )));
    }
    let granularity: Granularity = args.granularity.parse()?;
    let model = load_model(&args.model, &args.config, matches)?;
    let reports = detect_all(&model, &args.traces, false, args.jobs)?;
    let mut corpus = LabeledCorpus::default();
    for (trace, labels) in args.traces.iter().zip(&args.labels) {
        let labels = read_labels(open(labels)?, &labels.display().to_string())?;
        corpus.push(trace.display().to_string(), labels);
    }
    let metrics = compute_metrics(&reports, &corpus, granularity)?;
    writeln!(out, "{metrics}")?;
    writeln!(out, "# {}", metrics.summary())?;
    Ok(exit::OK)
}

fn cmd_gen(args: &GenArgs, matches: &ArgMatches, out: &mut dyn Write) -> Result<u8> {
    let (config, _) = resolve_config(&args.config, matches)?;
    let source_seed = args.source_seed.unwrap_or(args.seed);
    let spec = SourceSpec::synthetic(args.alphabet, args.zipf, source_seed)?.reseeded(args.seed);
    let (trace, mut labels) = if args.inject.is_empty() {
        let trace = gen_normal(&spec, args.calls)?;
        let epochs = args.calls.div_ceil(config.epoch_size);
        (trace, vec![crate::evaluator::Label::Normal; epochs])
    } else {
        let inj = InjectionSpec {
            target_epochs: args.inject.iter().copied().collect::<BTreeSet<_>>(),
            mode: args.mode.parse::<InjectionMode>()?,
            intensity: args.intensity,
            epoch_size: config.epoch_size,
        };
        gen_anomalous(&spec, args.calls, &inj)?
    };
    // The detector skips a tail too short for one window.
    let tail = args.calls % config.epoch_size;
    if tail != 0 && tail < config.window {
        labels.pop();
    }
    trace.write_to(create(&args.out)?)?;
    if let Some(path) = &args.labels {
        write_labels(&labels, create(path)?)?;
    }
    writeln!(out, "calls={} epochs={} seed={}", trace.len(), labels.len(), args.seed)?;
    Ok(exit::OK)
}

/// Parses `args` (program name first) and runs one subcommand. Normal
/// output goes to `out`; diagnostics go to stderr. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { exit::ERROR } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return exit::ERROR;
        }
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand is required");
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Train(a) => cmd_train(a, sub, out),
        Command::Detect(a) => cmd_detect(a, sub, out),
        Command::Eval(a) => cmd_eval(a, sub, out),
        Command::Gen(a) => cmd_gen(a, sub, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("boscids: {e}");
            exit::ERROR
        }
    }
}
