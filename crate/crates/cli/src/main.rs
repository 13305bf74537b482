use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crossover_tmle::continuous::KernelFamily;
use crossover_tmle::io::{
    ingest_csv, run_coverage, run_diagnose, run_estimate, run_simulate, write_coverage_csv, write_dataset_csv,
    write_influence_csv, Manifest, RunConfig,
};
use crossover_tmle::{BiomarkerKind, Error, EstimatorMode, Result};

#[derive(Parser)]
#[command(name = "crossover-tmle", version, about = "Targeted estimation of biomarker-stratified effects in crossover trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the configured contrast on a CSV dataset.
    Estimate(Common),
    /// Simulate a trial dataset.
    Simulate(Common),
    /// Run a replicated coverage study.
    Coverage(Common),
    /// Identification and numerical diagnostics for a CSV dataset.
    Diagnose(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    workers: Option<usize>,
    /// tmle, cv_tmle, ipw_tmle, one_step or continuous_cv_tmle.
    #[arg(long)]
    mode: Option<EstimatorMode>,
    #[arg(long = "s1-star")]
    s1_star: Option<f64>,
    /// A positive number, or `lscv`.
    #[arg(long)]
    bandwidth: Option<String>,
    /// uniform, gaussian or gaussian4.
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// discrete or continuous; continuous by default for continuous_cv_tmle.
    #[arg(long)]
    biomarker: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input.path = Some(p.clone());
        }
        if let Some(p) = &self.output {
            cfg.output = p.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(m) = self.mode {
            cfg.estimator.mode = m;
            if m == EstimatorMode::ContinuousCvTmle && self.config.is_none() {
                cfg.input.biomarker = BiomarkerKind::Continuous;
            }
        }
        if let Some(s) = self.s1_star {
            cfg.estimator.s1_star = s;
        }
        if let Some(b) = &self.bandwidth {
            cfg.estimator.bandwidth = match b.as_str() {
                "lscv" => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bandwidth `{v}` is neither a number nor `lscv`")))?,
                ),
            };
            if let Some(h) = cfg.estimator.bandwidth {
                cfg.coverage.bandwidths = vec![h];
            }
        }
        if let Some(k) = self.kernel {
            cfg.estimator.kernel = k;
        }
        if let Some(f) = self.folds {
            cfg.estimator.folds = f;
        }
        if let Some(r) = self.reps {
            cfg.simulation.reps = r;
        }
        if let Some(b) = &self.biomarker {
            cfg.input.biomarker = match b.as_str() {
                "discrete" => BiomarkerKind::Discrete,
                "continuous" => BiomarkerKind::Continuous,
                other => return Err(Error::Config(format!("unknown biomarker kind `{other}`"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_input(cfg: &RunConfig) -> Result<crossover_tmle::Dataset64> {
    let path = cfg
        .input
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("an input CSV is required (--input or [input] path)".into()))?;
    ingest_csv(path, &cfg.input.columns, cfg.input.biomarker)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => {
            let cfg = args.config()?;
            let d = load_input(&cfg)?;
            let (est, report) = run_estimate(&d, &cfg)?;
            write_json(&cfg.output, "report.json", &report)?;
            let mut f = create(&cfg.output, "influence.csv")?;
            write_influence_csv(&est, &mut f)?;
            f.flush()?;
            print_json(&report)
        }
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let d = run_simulate(&cfg)?;
            let mut f = create(&cfg.output, "dataset.csv")?;
            write_dataset_csv(&d, &mut f)?;
            f.flush()?;
            write_json(&cfg.output, "manifest.json", &Manifest::new("simulate", &cfg))
        }
        Command::Coverage(args) => {
            let cfg = args.config()?;
            let rows = run_coverage(&cfg)?;
            let mut f = create(&cfg.output, "coverage.csv")?;
            write_coverage_csv(&rows, &mut f)?;
            f.flush()?;
            write_json(&cfg.output, "manifest.json", &Manifest::new("coverage", &cfg))
        }
        Command::Diagnose(args) => {
            let cfg = args.config()?;
            let d = load_input(&cfg)?;
            let report = run_diagnose(&d, &cfg)?;
            write_json(&cfg.output, "diagnose.json", &report)?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::to_string(&e.payload()).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()));
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}
