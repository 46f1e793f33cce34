//! Command-line driver: split a corpus, run a framework or a fraction sweep,
//! regenerate report tables, check gradients.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deltatrain::corpus::{
    load_dataset, split_semi_supervised, DatasetFormat, LoadOptions, SplitBundle,
};
use deltatrain::neuralnet::gradcheck::run_suite;
use deltatrain::report::{emit_reports, load_runs};
use deltatrain::ssl::{run_experiment, run_fraction_sweep, Framework, RunResult, SslConfig};
use deltatrain::{Error, ErrorClass};

#[derive(Debug, Parser)]
#[command(
    name = "deltatrain",
    version,
    about = "Semi-supervised text classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a labeled corpus into train / dev / unlabeled (plus a test file).
    Split(SplitArgs),
    /// Run one framework on a saved split and write its manifest.
    Run(RunArgs),
    /// Run one framework at several labeled fractions of a saved split.
    Sweep(SweepArgs),
    /// Regenerate CSV tables (and optional SVG charts) from manifests.
    Report(ReportArgs),
    /// Finite-difference check of the classifier's gradients on toy models.
    CheckGradients(CheckArgs),
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// `csv` (class,title,body) or `folder` (one directory per class).
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value_t = 0.01)]
    labeled_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    dev_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Held-out test set in the same format.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<usize>,
}

#[derive(Debug, Args)]
struct RunFlags {
    #[arg(long)]
    framework: String,
    /// Directory written by `split`.
    #[arg(long)]
    split: PathBuf,
    /// Word-vector text file.
    #[arg(long)]
    embeddings: PathBuf,
    /// TOML key/value overrides of the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    flags: RunFlags,
    /// Manifest path; the selection ledger goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
    fractions: Vec<f64>,
    #[command(flatten)]
    flags: RunFlags,
    /// Directory receiving one manifest per fraction.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 100)]
    seed: u64,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn read_config(flags: &RunFlags) -> Result<SslConfig, Error> {
    let mut config = SslConfig::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_toml(&text)?;
    }
    config.framework = flags.framework.parse::<Framework>()?;
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn ledger_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("ledger.csv")
}

fn save_run(result: &RunResult, path: &Path) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    result.save(path)?;
    let ledger = ledger_path(path);
    fs::write(&ledger, result.ledger_csv()?).map_err(|e| Error::io(&ledger, e))
}

fn summarize(result: &RunResult, path: &Path) {
    let out = &result.output;
    println!(
        "{}: {} meta-epochs, best {}, final test accuracy {:.4} -> {}",
        result.framework(),
        out.records.len(),
        out.best_meta_epoch,
        out.final_test_accuracy,
        path.display()
    );
}

fn split(args: SplitArgs) -> Result<(), Error> {
    let format: DatasetFormat = args.format.parse()?;
    let options = |prefix: &str| {
        let o = LoadOptions::new(format, prefix);
        match args.num_classes {
            Some(n) => o.with_num_classes(n),
            None => o,
        }
    };
    let dataset = load_dataset(&args.input, &options("train"))?;
    let test = match &args.test {
        Some(path) => {
            let test = load_dataset(path, &options("test").with_num_classes(dataset.num_classes))?;
            test.documents
        }
        None => Vec::new(),
    };
    let bundle =
        split_semi_supervised(&dataset, &test, args.labeled_frac, args.dev_frac, args.seed)?;
    bundle.save(&args.out)?;
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "train {}, dev {}, unlabeled {}, test {} -> {}",
        bundle.train.len(),
        bundle.dev.len(),
        bundle.unlabeled.len(),
        bundle.test.len(),
        args.out.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    let config = read_config(&args.flags)?;
    let bundle = SplitBundle::load(&args.flags.split)?;
    let result = run_experiment(&bundle, &args.flags.embeddings, &config)?;
    save_run(&result, &args.out)?;
    summarize(&result, &args.out);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let config = read_config(&args.flags)?;
    if args.fractions.is_empty() {
        return Err(Error::Config("no fractions given".into()));
    }
    let bundle = SplitBundle::load(&args.flags.split)?;
    let dataset = bundle.original_training_set();
    let results = run_fraction_sweep(
        &dataset,
        &bundle.test,
        &args.fractions,
        bundle.dev_fraction,
        bundle.split_seed,
        &args.flags.embeddings,
        &config,
    )?;
    for (fraction, result) in args.fractions.iter().zip(&results) {
        let path = args.out.join(format!("fraction-{fraction}.json"));
        save_run(result, &path)?;
        summarize(result, &path);
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    let runs = load_runs(&args.runs)?;
    let bundle = emit_reports(&runs, &args.out, args.svg)?;
    for path in [
        &bundle.curves,
        &bundle.comparison,
        &bundle.unlabeled,
        &bundle.sweep,
    ]
    .into_iter()
    .chain(&bundle.charts)
    {
        println!("{}", path.display());
    }
    Ok(())
}

fn check_gradients(args: CheckArgs) -> Result<bool, Error> {
    let reports = run_suite(args.count, args.seed)?;
    for r in &reports {
        println!(
            "{} {}: max rel err {:.2e}, max abs err {:.2e}, {} failures, {} kinks",
            if r.passed() { "ok  " } else { "FAIL" },
            r.label,
            r.max_relative_error,
            r.max_absolute_error,
            r.failures,
            r.kinks
        );
    }
    Ok(reports.iter().all(|r| r.passed()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Split(a) => split(a).map(|()| true),
        Command::Run(a) => run(a).map(|()| true),
        Command::Sweep(a) => sweep(a).map(|()| true),
        Command::Report(a) => report(a).map(|()| true),
        Command::CheckGradients(a) => check_gradients(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(exit_code(ErrorClass::Numerical)),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
