//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 data error, 3 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use scatterdp::data::{DatasetId, ScatterParams, Split};
use scatterdp::harness::{
    self, cache_path, load_pair, split_features, DataSources, ExperimentConfig, ExperimentKind, ExperimentOutput,
};
use scatterdp::privacy::{self, PrivacyLedger};
use scatterdp::Error;

#[derive(Parser)]
#[command(name = "scatterdp", version, about = "Differentially private linear models on scattering features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and cache scattering features for both splits of a dataset.
    Extract {
        #[arg(long)]
        dataset: DatasetArg,
        /// Output directory for the cache files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        scales: usize,
        #[arg(long, default_value_t = 8)]
        orientations: usize,
        /// Dataset root (defaults to SCATTERDP_DATA).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Privacy accounting for the subsampled Gaussian mechanism.
    Account {
        #[arg(value_enum)]
        solve: AccountTarget,
        /// Sampling rate.
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: u64,
        /// Noise multiplier (for `epsilon`).
        #[arg(long)]
        sigma: Option<f64>,
        /// Target epsilon (for `sigma`).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: f64,
        /// Also charge private data normalization at this noise multiplier.
        #[arg(long)]
        sigma_norm: Option<f64>,
    },
    /// Train the `[run]` configuration once per seed.
    Train(ConfigArgs),
    /// Grid search over the `[grid]` axes.
    Sweep(ConfigArgs),
    /// One of the ablation studies.
    Experiment {
        #[arg(value_enum)]
        kind: StudyArg,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(clap::Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value` override applied to the config file (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Report path (overrides `output` in the config); stdout if neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Mnist,
    Fashion,
    Cifar10,
}

impl From<DatasetArg> for DatasetId {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Mnist => DatasetId::Mnist,
            DatasetArg::Fashion => DatasetId::Fashion,
            DatasetArg::Cifar10 => DatasetId::Cifar10,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AccountTarget {
    Epsilon,
    Sigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Convergence,
    BatchScaling,
    Sampling,
    Datasize,
}

impl From<StudyArg> for ExperimentKind {
    fn from(k: StudyArg) -> Self {
        match k {
            StudyArg::Convergence => ExperimentKind::Convergence,
            StudyArg::BatchScaling => ExperimentKind::BatchScaling,
            StudyArg::Sampling => ExperimentKind::Sampling,
            StudyArg::Datasize => ExperimentKind::Datasize,
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn run_config(kind: ExperimentKind, args: ConfigArgs) -> Result<(), Failure> {
    let mut overrides = vec![format!("kind=\"{}\"", kind.name())];
    overrides.extend(args.overrides);
    let cfg = ExperimentConfig::load(&args.config, &overrides)?;
    let data = load_pair(cfg.dataset, &cfg.scatter, &cfg.synthetic, &DataSources::from_env())?;
    let output: ExperimentOutput = harness::run_experiment(&cfg, &data)?;
    match args.out.or(cfg.output.clone()) {
        Some(path) => {
            for p in output.write(&path)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            for (i, (_, table)) in output.tables.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", table.to_csv());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Extract { dataset, out, scales, orientations, data } => {
            let id = DatasetId::from(dataset);
            let scatter = ScatterParams { scales, orientations };
            let src = DataSources { data_root: data.or_else(scatterdp::data::data_root), cache_root: Some(out.clone()) };
            for split in [Split::Train, Split::Test] {
                let set = split_features(id, split, &scatter, &src)?;
                println!(
                    "{}: {} samples x ({}, {}, {})",
                    cache_path(&out, id, split, &scatter).display(),
                    set.len(),
                    set.channels,
                    set.height,
                    set.width
                );
            }
        }
        Command::Account { solve, q, steps, sigma, epsilon, delta, sigma_norm } => {
            let alphas = privacy::default_orders();
            match solve {
                AccountTarget::Epsilon => {
                    let sigma = sigma.ok_or_else(|| Failure::Usage("account epsilon needs --sigma".into()))?;
                    let mut ledger = PrivacyLedger::with_orders(delta, &alphas)?;
                    if let Some(s) = sigma_norm {
                        ledger.charge_data_norm(s)?;
                    }
                    ledger.charge_steps(q, sigma, steps)?;
                    let dp = ledger.total()?;
                    println!("epsilon={} alpha={}", harness::fmt_num(dp.epsilon), harness::fmt_num(dp.alpha));
                }
                AccountTarget::Sigma => {
                    let eps = epsilon.ok_or_else(|| Failure::Usage("account sigma needs --epsilon".into()))?;
                    let s = privacy::solve_sigma_with(q, steps, eps, delta, sigma_norm, &alphas)?;
                    println!("sigma={}", harness::fmt_num(s));
                }
            }
        }
        Command::Train(args) => run_config(ExperimentKind::Train, args)?,
        Command::Sweep(args) => run_config(ExperimentKind::Sweep, args)?,
        Command::Experiment { kind, config } => run_config(kind.into(), config)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Divergence { .. } => 3,
                ref e if e.is_data_error() => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
