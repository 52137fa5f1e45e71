//! Command-line front end: `run`, `consensus`, `spectral` and `oracle`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{
    configure_threads, exit_code, oracle_report, run_experiment, spectral_report, DrsgdScaling, ExperimentConfig,
    GraphSpec, InitSpec, ProblemSpec, ScheduleSpec, EXIT_CONFIG,
};
use crate::algorithms::Algorithm;
use crate::error::Result;

/// Tangent noise applied to the shared start of `consensus` unless set.
pub const CONSENSUS_PERTURB: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "stiefel-dec", version, about = "Decentralized optimization on the Stiefel manifold")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its CSV log.
    Run(ConfigArgs),
    /// Run pure consensus (DRCS) from a perturbed shared start.
    Consensus(ConfigArgs),
    /// Print the spectral constants of the network.
    Spectral(ConfigArgs),
    /// Solve the problem centrally; `--out` saves the solution.
    Oracle(ConfigArgs),
}

/// Flags override values from `--config`.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// drcs, drsgd, drdgd or drgta.
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    /// ring, complete or er(p).
    #[arg(long)]
    pub graph: Option<GraphSpec>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Communication rounds per iteration (0 = theoretical minimum).
    #[arg(long)]
    pub t: Option<usize>,
    /// Consensus stepsize (0 = alpha_bar).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// diminishing, constant or user(beta_hat).
    #[arg(long)]
    pub schedule: Option<ScheduleSpec>,
    /// Shorthand for `--schedule user(beta_hat)`.
    #[arg(long)]
    pub beta_hat: Option<f64>,
    /// synthetic(d, r, m, gap) or dsv(path, r, divisor).
    #[arg(long)]
    pub problem: Option<ProblemSpec>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tol_ds: Option<f64>,
    #[arg(long)]
    pub tol_grad: Option<f64>,
    #[arg(long)]
    pub tol_consensus: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw an independent starting point per agent.
    #[arg(long)]
    pub independent_init: bool,
    /// Norm of the tangent noise added to each starting point.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// DRSGD rescaling of beta_hat: epochs or speedup.
    #[arg(long, value_parser = ["epochs", "speedup"])]
    pub drsgd_scaling: Option<String>,
    /// Mix with t rounds of W instead of a precomputed W^t.
    #[arg(long)]
    pub gossip_rounds: bool,
    /// Record wall-clock milliseconds (logs are then not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(algorithm, graph, n, t, alpha, schedule, problem, max_iters, max_epochs, batch_size, seed, perturb);
        if let Some(b) = self.beta_hat {
            cfg.schedule = ScheduleSpec::User(b);
        }
        if self.tol_ds.is_some() {
            cfg.tol_ds = self.tol_ds;
        }
        if self.tol_grad.is_some() {
            cfg.tol_grad = self.tol_grad;
        }
        if self.tol_consensus.is_some() {
            cfg.tol_consensus = self.tol_consensus;
        }
        if self.independent_init {
            cfg.init = InitSpec::Independent;
        }
        match self.drsgd_scaling.as_deref() {
            Some("speedup") => cfg.drsgd_scaling = DrsgdScaling::Speedup,
            Some(_) => cfg.drsgd_scaling = DrsgdScaling::Epochs,
            None => {}
        }
        cfg.gossip |= self.gossip_rounds;
        cfg.timing |= self.timing;
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => run_and_report(args.resolve()?),
        Command::Consensus(args) => {
            let mut cfg = args.resolve()?;
            cfg.algorithm = Algorithm::Drcs;
            if args.perturb.is_none() && cfg.perturb == 0.0 && cfg.init == InitSpec::Shared {
                cfg.perturb = CONSENSUS_PERTURB;
            }
            run_and_report(cfg)
        }
        Command::Spectral(args) => {
            print!("{}", spectral_report(&args.resolve()?)?);
            Ok(0)
        }
        Command::Oracle(args) => {
            let cfg = args.resolve()?;
            let report = oracle_report(&cfg)?;
            print!("{}", report.text);
            if let Some(path) = &cfg.output {
                std::fs::write(path, report.point_csv())?;
            }
            Ok(0)
        }
    }
}

fn run_and_report(cfg: ExperimentConfig) -> Result<i32> {
    let outcome = run_experiment(&cfg)?;
    if outcome.experiment.config.output.is_none() {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        lock.write_all(outcome.csv.as_bytes())?;
        lock.flush()?;
    }
    eprintln!("{}", outcome.summary);
    Ok(outcome.exit_code)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
