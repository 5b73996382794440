//! Command-line front end behind the `qreg` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bayes::McmcConfig;
use crate::error::{Error, ErrorClass, Result};
use crate::inference::BootstrapConfig;
use crate::model::{InstrumentBlock, ModelSpec, QuantileLevel, Transform};
use crate::pipeline::manifest::MANIFEST_HELP;
use crate::pipeline::{
    dgp, parse_report_csv, read_manifest, render_report, simulate_dgp, write_chains, write_csv, DataSource,
    DgpConfig, DgpKind, EstimatorSet, Manifest, Noise, ReportFormat, StudyConfig,
};
use crate::stats::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qreg", version, about = "Quantile regression studies over daily CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known quantile coefficients.
    Simulate(SimulateArgs),
    /// Fit estimators to one CSV file given on the command line.
    Fit(FitArgs),
    /// Run a study described by a manifest file.
    #[command(after_long_help = MANIFEST_HELP)]
    Study(StudyArgs),
    /// Re-render a CSV report in another format.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// location-scale or simultaneous
    #[arg(long, default_value = "location-scale")]
    kind: String,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Coefficients, intercept first.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    beta: Vec<f64>,
    /// Base scale then scale slopes (location-scale only); defaults to 1, 0, ...
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Vec<f64>,
    /// normal or laplace
    #[arg(long, default_value = "normal")]
    noise: String,
    /// Correlation between the endogenous regressor and the structural error.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    rho: f64,
    /// Excluded instruments (simultaneous only).
    #[arg(long, default_value_t = 1)]
    instruments: usize,
    /// First-stage coefficient on each instrument.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV path (default standard output).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the true quantile coefficients over the decile grid.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// text, csv or markdown
    #[arg(long)]
    format: Option<String>,
    /// Report path (default standard output).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV: `date` column then numeric columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_delimiter = ',', required = true)]
    regressors: Vec<String>,
    #[arg(long)]
    no_intercept: bool,
    /// Comma-separated: ols, 2sls, qr, bqr, bqr_2sls.
    #[arg(long, default_value = "ols,qr")]
    estimators: String,
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// COLUMN=T[,T...] with T one of log, lag(k), diff. Repeatable.
    #[arg(long = "transform")]
    transforms: Vec<String>,
    #[arg(long)]
    endogenous: Option<String>,
    #[arg(long, value_delimiter = ',')]
    instruments: Vec<String>,
    /// Do not use the lag-1 response as an instrument.
    #[arg(long)]
    no_lagged_response_instrument: bool,
    #[arg(long, default_value_t = 11_000)]
    draws: usize,
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    bootstrap_replications: usize,
    /// LO:HI pairs for slope-equality tests.
    #[arg(long, value_delimiter = ',')]
    slope_pairs: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    interval_mass: f64,
    /// Write posterior chains as CSV into this directory.
    #[arg(long)]
    chains_dir: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct StudyArgs {
    manifest: PathBuf,
    /// Overrides the manifest's `chains_dir`.
    #[arg(long)]
    chains_dir: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report previously written with `--format csv`.
    input: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
}

/// Runs the command line with `args` (program name first), writing normal
/// output to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Fit(a) => {
            let manifest = fit_manifest(&a)?;
            execute(&manifest, stdout, stderr)
        }
        Command::Study(a) => {
            let mut manifest = read_manifest(&a.manifest)?;
            if let Some(f) = &a.out.format {
                manifest.format = f.parse()?;
            }
            if a.out.output.is_some() {
                manifest.output = a.out.output.clone();
            }
            if a.chains_dir.is_some() {
                manifest.chains_dir = a.chains_dir.clone();
            }
            execute(&manifest, stdout, stderr)
        }
        Command::Report(a) => {
            let text = std::fs::read_to_string(&a.input)
                .map_err(|e| Error::Io(e).context(format!("reading {}", a.input.display())))?;
            let (table, tests) = parse_report_csv(&text, &a.input.display().to_string())?;
            let format = a.out.format.as_deref().map_or(Ok(ReportFormat::Text), str::parse)?;
            emit(&render_report(&table, &tests, format), a.out.output.as_deref(), stdout)
        }
    }
}

fn execute(manifest: &Manifest, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let report = manifest.run()?;
    let _ = writeln!(stderr, "estimation sample: {} rows", report.n);
    if let Some(dir) = &manifest.chains_dir {
        let paths = write_chains(dir, &report.chains)?;
        let _ = writeln!(stderr, "wrote {} chains to {}", paths.len(), dir.display());
    }
    let doc = render_report(&report.table, &report.tests, manifest.format);
    emit(&doc, manifest.output.as_deref(), stdout)
}

fn emit(doc: &str, path: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, doc).map_err(|e| Error::Io(e).context(format!("writing {}", p.display())))
        }
        None => Ok(stdout.write_all(doc.as_bytes())?),
    }
}

fn parse_tau(v: f64) -> Result<QuantileLevel> {
    QuantileLevel::new(v)
}

fn fit_manifest(a: &FitArgs) -> Result<Manifest> {
    let mut spec = ModelSpec {
        response: a.response.clone(),
        regressors: a.regressors.clone(),
        intercept: !a.no_intercept,
        transforms: Default::default(),
        instrument_block: None,
    };
    for t in &a.transforms {
        let (col, list) = t
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("transform `{t}` is not COLUMN=T")))?;
        for item in list.split(',').filter(|s| !s.trim().is_empty()) {
            spec = spec.with_transform(col.trim(), item.parse::<Transform>()?);
        }
    }
    if let Some(endo) = &a.endogenous {
        spec.instrument_block = Some(InstrumentBlock {
            endogenous: endo.clone(),
            instruments: a.instruments.clone(),
            lagged_response: !a.no_lagged_response_instrument,
        });
    } else if !a.instruments.is_empty() {
        return Err(Error::InvalidArgument("--instruments requires --endogenous".into()));
    }
    spec.validate()?;

    let estimators: EstimatorSet = a.estimators.parse()?;
    if estimators.needs_instruments() && spec.instrument_block.is_none() {
        return Err(Error::InvalidArgument("instrumented estimators need --endogenous".into()));
    }
    let taus = if a.taus.is_empty() {
        QuantileLevel::decile_grid()
    } else {
        a.taus.iter().map(|&t| parse_tau(t)).collect::<Result<_>>()?
    };
    let slope_pairs = a
        .slope_pairs
        .iter()
        .map(|p| {
            let (lo, hi) = p
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("slope pair `{p}` is not LO:HI")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("`{s}` is not a quantile level")))
                    .and_then(parse_tau)
            };
            Ok((num(lo)?, num(hi)?))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Manifest {
        data: DataSource::Table(a.data.clone()),
        spec,
        taus,
        estimators,
        study: StudyConfig {
            mcmc: McmcConfig::new(a.draws, a.burn_in, a.thin, a.seed)?,
            prior: None,
            bootstrap: BootstrapConfig::new(a.bootstrap_replications, derive_seed(a.seed, 1))?,
            slope_pairs,
            interval_mass: a.interval_mass,
        },
        format: a.out.format.as_deref().map_or(Ok(ReportFormat::Text), str::parse)?,
        output: a.out.output.clone(),
        chains_dir: a.chains_dir.clone(),
    })
}

fn simulate(a: SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let kind: DgpKind = a.kind.parse()?;
    let p = a.beta.len();
    let gamma = if a.gamma.is_empty() {
        let mut g = vec![0.0; p];
        if kind == DgpKind::LocationScale && p > 0 {
            g[0] = 1.0;
        }
        g
    } else {
        a.gamma.clone()
    };
    let cfg = DgpConfig {
        kind,
        n: a.n,
        beta: a.beta.clone(),
        gamma,
        noise: a.noise.parse::<Noise>()?,
        rho: a.rho,
        instruments: a.instruments,
        pi: a.pi,
        seed: a.seed,
    };
    let (data, truth) = simulate_dgp(&cfg)?;
    if let Some(path) = &a.truth {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["tau".to_string(), crate::model::INTERCEPT.to_string()];
        header.extend(dgp::regressor_names(p));
        w.write_record(&header)?;
        for tau in QuantileLevel::decile_grid() {
            let mut rec = vec![format!("{}", tau.value())];
            rec.extend(truth.quantile_coefficients(tau).iter().map(|b| format!("{b}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    match &a.output {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| Error::Io(e).context(format!("creating {}", path.display())))?;
            write_csv(&data, std::io::BufWriter::new(file))
        }
        None => write_csv(&data, stdout),
    }
}
