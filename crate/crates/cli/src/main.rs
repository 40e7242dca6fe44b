//! `robustgcn` command line: run, sweep and report corruption experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use robustgcn::corrupt::{FillStrategy, Regime};
use robustgcn::data::{SplitSpec, SynthSpec, TrainSelection};
use robustgcn::experiment::{
    emit_outputs, emit_sweep, format_table, load_results, run_experiment, sweep, Corruption,
    DataSource, ExperimentConfig, ModelKind, SweepAxis,
};
use robustgcn::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "robustgcn",
    version,
    about = "Robust graph convolution experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and evaluate models over several paired runs.
    Run(RunArgs),
    /// Repeat `run` across values of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print a saved results directory, optionally re-emitting it elsewhere.
    Report {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    Flip,
    Value,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MissingArg {
    Elements,
    Nodes,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FillArg {
    Zf,
    Mf,
    Nmf,
}

impl From<FillArg> for FillStrategy {
    fn from(f: FillArg) -> Self {
        match f {
            FillArg::Zf => FillStrategy::Zf,
            FillArg::Mf => FillStrategy::Mf,
            FillArg::Nmf => FillStrategy::Nmf,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    NoiseLevel,
    MissingLevel,
    Alpha,
    Epsilon,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::NoiseLevel => SweepAxis::NoiseLevel,
            AxisArg::MissingLevel => SweepAxis::MissingLevel,
            AxisArg::Alpha => SweepAxis::Alpha,
            AxisArg::Epsilon => SweepAxis::Epsilon,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Dataset bundle directory.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    dataset: Option<PathBuf>,
    /// Synthetic block-model data, e.g. `classes=3,nodes=100,p_in=0.1,p_out=0.01,dims=4,noise=0.5`.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    synth: Option<String>,
    /// Comma-separated models: gcn, gden-nlap, robustgcn-n, robustgcn-m1, robustgcn-m2a, robustgcn-m2e.
    #[arg(long, value_delimiter = ',', default_value = "gcn")]
    model: Vec<String>,
    #[arg(long, value_enum, conflicts_with = "missing")]
    noise: Option<NoiseArg>,
    #[arg(long, value_enum)]
    missing: Option<MissingArg>,
    /// Corruption or missing level in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    level: f64,
    /// Filling used by non-mask models on missing data.
    #[arg(long, value_enum, default_value = "nmf")]
    fill: FillArg,
    /// Alpha grid; replaces the default of every model that has one.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Stopping-tolerance grid of the l1 propagator.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Iterations of the truncated mask propagators.
    #[arg(long)]
    steps: Option<usize>,
    /// Also run unrolled FISTA in the hidden layer of robustgcn-n.
    #[arg(long)]
    both_layers: bool,
    /// Force `A + I` renormalization on (true) or off (false) for every model.
    #[arg(long)]
    renormalize: Option<bool>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, default_value_t = 20, conflicts_with = "train_total")]
    train_per_class: usize,
    #[arg(long)]
    train_total: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Output root; each experiment writes into a subdirectory named by its fingerprint.
    #[arg(long, env = "ROBUSTGCN_OUT", default_value = "results")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        let synthetic = match (&self.dataset, &self.synth) {
            (Some(path), _) => {
                cfg.data = DataSource::Bundle(path.clone());
                false
            }
            (None, Some(spec)) => {
                cfg.data = DataSource::Synthetic(spec.parse::<SynthSpec>()?);
                true
            }
            (None, None) => return Err(Error::Config("give --dataset or --synth".into())),
        };
        cfg.models = self
            .model
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModelKind>, _>>()?;
        let regime = match (self.noise, self.missing) {
            (Some(NoiseArg::Flip), _) => Some(Regime::BinaryFlip),
            (Some(NoiseArg::Value), _) => Some(Regime::RandomValue),
            (None, Some(MissingArg::Elements)) => Some(Regime::MissingElements),
            (None, Some(MissingArg::Nodes)) => Some(Regime::MissingNodes),
            (None, None) if self.level != 0.0 => {
                return Err(Error::Config("--level needs --noise or --missing".into()))
            }
            (None, None) => None,
        };
        cfg.corruption = regime.map(|regime| Corruption {
            regime,
            level: self.level,
        });
        cfg.fill = self.fill.into();
        let p = &mut cfg.propagation;
        if let Some(a) = &self.alpha {
            p.n_alpha = a.clone();
            p.mask_alpha = a.clone();
            p.gden_alpha = a.clone();
        }
        if let Some(e) = &self.epsilon {
            p.n_epsilon = e.clone();
        }
        if let Some(t) = self.steps {
            p.m1_steps = t;
            p.m2_steps = t;
        }
        p.n_both_layers = self.both_layers;
        p.renormalize = self.renormalize;
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.dropout {
            cfg.train.dropout = v;
        }
        // Small synthetic graphs cannot host the citation-benchmark split sizes.
        let (val, test) = if synthetic {
            (100, None)
        } else {
            (500, Some(1000))
        };
        cfg.split = SplitSpec {
            train: self.train_total.map_or(
                TrainSelection::PerClass(self.train_per_class),
                TrainSelection::Total,
            ),
            val_size: self.val_size.unwrap_or(val),
            test_size: self.test_size.or(test),
            seed: 0,
        };
        cfg.runs = self.runs;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SpectralNormNotConverged { .. }
            | Error::SolveNotConverged { .. }
            | Error::NonFinite { .. }
            | Error::Diverged { .. }
            | Error::Io { .. } => Failure::Runtime(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn setup_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--threads must be ≥ 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")
            .map_err(Failure::Runtime)?;
    }
    Ok(())
}

fn short(fingerprint: &str) -> &str {
    &fingerprint[..12.min(fingerprint.len())]
}

fn cmd_run(args: &RunArgs) -> Result<bool, Failure> {
    let cfg = args.config()?;
    setup_threads(args.threads)?;
    let table = run_experiment(&cfg)?;
    let dir = args.out.join(short(&table.fingerprint));
    emit_outputs(&table, &dir).map_err(|e| Failure::Runtime(e.into()))?;
    print!("{}", format_table(&table));
    println!("# written to {}", dir.display());
    Ok(table.error_count() == 0)
}

fn cmd_sweep(args: &RunArgs, axis: SweepAxis, values: &[f64]) -> Result<bool, Failure> {
    let cfg = args.config()?;
    setup_threads(args.threads)?;
    let result = sweep(&cfg, axis, values)?;
    let dir = args
        .out
        .join(format!("sweep-{axis}-{}", short(&cfg.fingerprint())));
    emit_sweep(&result, &dir).map_err(|e| Failure::Runtime(e.into()))?;
    print!("{}", result.curve_csv());
    for p in result.points.iter().filter(|p| p.error.is_some()) {
        eprintln!(
            "{axis} = {}: {}",
            p.value,
            p.error.as_deref().unwrap_or_default()
        );
    }
    println!("# written to {}", dir.display());
    Ok(result.error_count() == 0)
}

fn cmd_report(path: &Path, out: Option<&Path>) -> Result<bool, Failure> {
    let sweep_csv = path.join("curve.csv");
    if sweep_csv.is_file() {
        let csv = std::fs::read_to_string(&sweep_csv)
            .with_context(|| format!("reading {}", sweep_csv.display()))
            .map_err(Failure::Config)?;
        print!("{csv}");
        return Ok(true);
    }
    let table = load_results(path)?;
    print!("{}", format_table(&table));
    if let Some(out) = out {
        emit_outputs(&table, out).map_err(|e| Failure::Runtime(e.into()))?;
    }
    Ok(table.error_count() == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { run, axis, values } => cmd_sweep(run, (*axis).into(), values),
        Command::Report { path, out } => cmd_report(path, out.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run failed; see the results file for details");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
