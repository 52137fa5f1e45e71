//! Experiment orchestration: configuration, problem and network assembly,
//! stepsize resolution, CSV run logs and the text reports behind the
//! command-line tool.

pub mod cli;
mod config;

use std::fmt::Write as _;
use std::io::Write;

pub use config::{DrsgdScaling, ExperimentConfig, GraphSpec, InitSpec, ProblemSpec, ScheduleSpec};

use crate::algorithms::{
    drgta_max_stepsize, drgta_theoretical_stepsize, drsgd_constant_min_iterations, drsgd_constant_schedule,
    drsgd_diminishing_schedule, run, seeded_stream, Algorithm, RunLog, RunSettings, StepsizeSchedule,
};
use crate::error::{Error, Result};
use crate::manifold::{polar_retract, random_stiefel, random_tangent, ConsensusRegionParams, StiefelPoint, SwarmState};
use crate::metrics::{subspace_distance, CSV_HEADER};
use crate::network::{
    complete_graph, consensus_rate_params, erdos_renyi, metropolis_weights, min_communication_rounds, ring_graph,
    ConsensusRateReport, Graph, Mixer, MixingMatrix,
};
use crate::problems::{
    centralized_oracle, estimate_xi, load_dsv_partition, quadratic_constants, synthesize_eigengap_data, EigLocal,
    LocalObjective, SmoothnessConstants,
};

/// Generator streams of the master seed; agents own streams `0..n`.
pub const STREAM_DATA: u64 = u64::MAX;
pub const STREAM_INIT: u64 = u64::MAX - 1;
pub const STREAM_GRAPH: u64 = u64::MAX - 2;
pub const STREAM_XI: u64 = u64::MAX - 3;

/// Single-sample gradient draws per agent when estimating `Xi`.
pub const XI_DRAWS: usize = 256;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INGESTION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_NO_CONVERGENCE: i32 = 5;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parameter { .. }
        | Error::Topology(_)
        | Error::Stepsize { .. }
        | Error::InvalidMatrix(_) => EXIT_CONFIG,
        Error::Ingestion { .. } => EXIT_INGESTION,
        Error::DegenerateMean { .. } | Error::DegenerateAt { .. } => EXIT_NUMERICAL,
        _ => 1,
    }
}

/// Sizes the global worker pool from `STIEFEL_DEC_THREADS` (unset or 0 =
/// one thread per core). Returns the pool size.
pub fn configure_threads() -> Result<usize> {
    let threads = match std::env::var("STIEFEL_DEC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("STIEFEL_DEC_THREADS: `{v}` is not a thread count")))?,
        Err(_) => 0,
    };
    // A pool that already exists keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(rayon::current_num_threads())
}

pub fn build_network(cfg: &ExperimentConfig) -> Result<(Graph, MixingMatrix)> {
    let graph = match cfg.graph {
        GraphSpec::Ring => ring_graph(cfg.n)?,
        GraphSpec::Complete => complete_graph(cfg.n)?,
        GraphSpec::ErdosRenyi(p) => erdos_renyi(cfg.n, p, &mut seeded_stream(cfg.seed, STREAM_GRAPH))?,
    };
    let w = metropolis_weights(&graph)?;
    Ok((graph, w))
}

/// Local objectives and, when it is well defined, the optimal subspace.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<(Vec<EigLocal>, Option<StiefelPoint>)> {
    match &cfg.problem {
        ProblemSpec::Synthetic { d, r, m, gap } => {
            let data = synthesize_eigengap_data(cfg.n, *m, *d, *r, *gap, &mut seeded_stream(cfg.seed, STREAM_DATA))?;
            Ok((data.locals, Some(data.oracle)))
        }
        ProblemSpec::Dsv { path, r, divisor } => {
            let locals = load_dsv_partition(path, cfg.n, *divisor)?;
            let d = locals[0].dim();
            if *r > d {
                return Err(Error::Config(format!("problem: r = {r} exceeds the data dimension {d}")));
            }
            let oracle = centralized_oracle(&locals, *r)?;
            Ok((locals, (!oracle.ill_defined()).then_some(oracle.point)))
        }
    }
}

fn initial_state(cfg: &ExperimentConfig, d: usize, r: usize) -> Result<SwarmState> {
    let mut rng = seeded_stream(cfg.seed, STREAM_INIT);
    let shared = random_stiefel(d, r, &mut rng)?;
    let mut points = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let base = match cfg.init {
            InitSpec::Shared => shared.clone(),
            InitSpec::Independent => random_stiefel(d, r, &mut rng)?,
        };
        points.push(if cfg.perturb > 0.0 {
            polar_retract(&base, &random_tangent(&base, cfg.perturb, &mut rng))?
        } else {
            base
        });
    }
    SwarmState::new(points)
}

/// An experiment with every automatic choice resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// The configuration with `t`, `alpha` and tolerances filled in.
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub w: MixingMatrix,
    pub mixer: Mixer,
    pub locals: Vec<EigLocal>,
    pub oracle: Option<StiefelPoint>,
    pub constants: SmoothnessConstants,
    pub region: ConsensusRegionParams,
    pub t_min: usize,
    /// Rate constants at `min(alpha, alpha_bar)`.
    pub rate: ConsensusRateReport,
    pub settings: RunSettings,
    pub init: SwarmState,
    pub warnings: Vec<String>,
    /// Extra derived values echoed into the log header.
    pub diagnostics: Vec<(&'static str, f64)>,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut cfg = cfg.clone();
        let mut warnings = cfg.warnings();
        let mut diagnostics = Vec::new();

        let (graph, w) = build_network(&cfg)?;
        let (locals, oracle) = build_problem(&cfg)?;
        let (d, r) = (locals[0].dim(), cfg.problem.r());
        let constants = quadratic_constants(&locals, r)?;
        let region = ConsensusRegionParams::default_for(r)?;

        let t_min = min_communication_rounds(&w)?;
        if cfg.t == 0 {
            cfg.t = t_min;
        } else if cfg.t < t_min {
            warnings.push(format!(
                "t = {} is below the theoretical minimum {t_min}; rate guarantees do not apply",
                cfg.t
            ));
        }
        let alpha_bar = consensus_rate_params(&w, cfg.t, &region, None)?.alpha_bar;
        if cfg.alpha == 0.0 {
            cfg.alpha = alpha_bar;
        } else if cfg.alpha > alpha_bar {
            warnings.push(format!(
                "alpha = {} exceeds alpha_bar = {alpha_bar:.6} for t = {}; rate constants are evaluated at alpha_bar",
                cfg.alpha, cfg.t
            ));
        }
        let rate = consensus_rate_params(&w, cfg.t, &region, Some(cfg.alpha.min(alpha_bar)))?;

        let init = initial_state(&cfg, d, r)?;
        let mixer = if cfg.gossip {
            Mixer::gossip(&w, cfg.t)?
        } else {
            Mixer::power(&w, cfg.t)?
        };

        let mean_m = locals.iter().map(|o| o.sample_count() as f64).sum::<f64>() / locals.len() as f64;
        let algo = cfg.algorithm;
        let steps_per_epoch = if algo.is_stochastic() {
            let max_m = locals.iter().map(|o| o.sample_count()).max().unwrap_or(1);
            max_m.div_ceil(cfg.batch_size)
        } else {
            1
        };
        let max_rows = if algo.is_stochastic() { cfg.max_epochs } else { cfg.max_iters };
        let delta1 = region.delta1();

        let mut constants_used = constants;
        let schedule = match (algo, cfg.schedule) {
            (Algorithm::Drcs, _) => StepsizeSchedule::Constant { beta: 0.0 },
            (_, ScheduleSpec::User(beta_hat)) => {
                let per_sample = if algo.is_stochastic() {
                    match cfg.drsgd_scaling {
                        DrsgdScaling::Epochs => beta_hat / (cfg.max_epochs as f64).sqrt(),
                        DrsgdScaling::Speedup => beta_hat * (cfg.n as f64).sqrt() / (10_000.0 * 300f64.sqrt()),
                    }
                } else {
                    beta_hat
                };
                StepsizeSchedule::User {
                    beta_hat,
                    beta: per_sample / mean_m,
                }
            }
            (_, ScheduleSpec::Diminishing) => drsgd_diminishing_schedule(&constants, rate.rho_t, rate.alpha, delta1)?,
            (Algorithm::Drgta, ScheduleSpec::Constant) => StepsizeSchedule::Constant {
                beta: drgta_max_stepsize(&constants, rate.rho_t, rate.alpha, delta1)?,
            },
            (Algorithm::Drdgd, ScheduleSpec::Constant) => {
                constants_used = constants.with_xi(0.0);
                drsgd_constant_schedule(max_rows.saturating_sub(1), cfg.n, &constants_used)?
            }
            (Algorithm::Drsgd, ScheduleSpec::Constant) => {
                let xi = estimate_xi(&locals, &init.points()[0], XI_DRAWS, &mut seeded_stream(cfg.seed, STREAM_XI))?;
                constants_used = constants.with_xi(xi);
                let k = (max_rows * steps_per_epoch).saturating_sub(1);
                if xi > 0.0 {
                    let need = drsgd_constant_min_iterations(cfg.n, &constants_used, rate.rho_t, rate.alpha, delta1)?;
                    diagnostics.push(("constant_min_k_plus_1", need));
                    if ((k + 1) as f64) < need {
                        warnings.push(format!(
                            "K + 1 = {} is below the computable part of the constant-stepsize requirement ({need:.3e})",
                            k + 1
                        ));
                    }
                }
                drsgd_constant_schedule(k, cfg.n, &constants_used)?
            }
        };

        if algo == Algorithm::Drgta {
            let beta_bar = drgta_max_stepsize(&constants, rate.rho_t, rate.alpha, delta1)?;
            diagnostics.push(("beta_bar", beta_bar));
            let sigma2_t = rate.sigma2_t;
            if let Ok(diag) = drgta_theoretical_stepsize(&constants, rate.rho_t, sigma2_t, rate.alpha, delta1, r) {
                diagnostics.push(("beta_theory_heuristic", diag.beta));
            }
            if schedule.beta(0) > beta_bar {
                warnings.push(format!(
                    "beta = {:.3e} exceeds the tracking bound beta_bar = {beta_bar:.3e}",
                    schedule.beta(0)
                ));
            }
        }

        let has_oracle = oracle.is_some();
        if cfg.tol_ds.is_none() && has_oracle {
            cfg.tol_ds = match algo {
                Algorithm::Drgta | Algorithm::Drdgd => Some(1e-8),
                Algorithm::Drsgd => Some(1e-5),
                Algorithm::Drcs => None,
            };
        }
        if cfg.tol_grad.is_none() && matches!(algo, Algorithm::Drgta | Algorithm::Drdgd) {
            cfg.tol_grad = Some(1e-8);
        }
        if cfg.tol_consensus.is_none() && algo == Algorithm::Drcs {
            cfg.tol_consensus = Some(1e-24);
        }

        let settings = RunSettings {
            algorithm: algo,
            alpha: cfg.alpha,
            schedule,
            max_iters: max_rows,
            batch_size: cfg.batch_size,
            tol_ds: cfg.tol_ds,
            tol_grad: cfg.tol_grad,
            tol_consensus: cfg.tol_consensus,
            seed: cfg.seed,
            timing: cfg.timing,
        };

        Ok(Self {
            config: cfg,
            graph,
            w,
            mixer,
            locals,
            oracle,
            constants: constants_used,
            region,
            t_min,
            rate,
            settings,
            init,
            warnings,
            diagnostics,
        })
    }

    pub fn run(&self) -> Result<RunLog> {
        run(&self.settings, &self.locals, &self.mixer, self.init.clone(), self.oracle.as_ref())
    }

    /// `#`-prefixed header: the resolved configuration as TOML, then the
    /// derived constants.
    pub fn header(&self) -> String {
        let mut out = String::from("# stiefel-dec run log\n# [config]\n");
        for line in self.config.to_toml().lines() {
            let _ = writeln!(out, "# {line}");
        }
        let c = &self.constants;
        let mut derived: Vec<(&str, String)> = vec![
            ("agents", self.w.n().to_string()),
            ("edges", self.graph.edges().len().to_string()),
            ("sigma2", format!("{:?}", self.w.sigma2())),
            ("t", self.config.t.to_string()),
            ("t_min", self.t_min.to_string()),
            ("alpha_bar", format!("{:?}", self.rate.alpha_bar)),
            ("rho_t", format!("{:?}", self.rate.rho_t)),
            ("L", format!("{:?}", c.l)),
            ("L_g", format!("{:?}", c.l_g)),
            ("L_G", format!("{:?}", c.l_big_g)),
            ("D", format!("{:?}", c.d)),
            ("beta_0", format!("{:?}", self.settings.schedule.beta(0))),
        ];
        if let Some(xi) = c.xi {
            derived.push(("xi_estimate", format!("{xi:?}")));
        }
        for (k, v) in &self.diagnostics {
            derived.push((k, format!("{v:?}")));
        }
        out.push_str("# [derived]\n");
        for (k, v) in derived {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}

/// Header, column names and one row per record.
pub fn render_log(header: &str, log: &RunLog) -> String {
    let mut out = String::with_capacity(header.len() + 96 * (log.records.len() + 1));
    out.push_str(header);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rec in &log.records {
        out.push_str(&rec.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub log: RunLog,
    pub csv: String,
    pub summary: String,
    pub exit_code: i32,
}

/// Prepares and runs `cfg`, writing the log to `cfg.output` when set.
/// A run that exhausts its budget without meeting a configured tolerance
/// still produces its log, with exit code 5.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let experiment = Experiment::prepare(cfg)?;
    for w in &experiment.warnings {
        log::warn!("{w}");
    }
    let log = experiment.run()?;
    let csv = render_log(&experiment.header(), &log);
    if let Some(path) = &experiment.config.output {
        std::fs::File::create(path)?.write_all(csv.as_bytes())?;
    }
    let s = &experiment.settings;
    let has_target = (s.tol_ds.is_some() && experiment.oracle.is_some()) || s.tol_grad.is_some() || s.tol_consensus.is_some();
    let exit_code = if log.stop.converged() || !has_target {
        0
    } else {
        EXIT_NO_CONVERGENCE
    };
    let last = log.last();
    let summary = format!(
        "{}: {:?} at k = {} ({} steps, {} messages); consensus_err_sq = {:.3e}, grad_norm = {:.3e}, ds_oracle = {}",
        log.algorithm,
        log.stop,
        last.k,
        log.steps,
        log.messages,
        last.consensus_err_sq,
        last.grad_norm_sq.sqrt(),
        last.ds_oracle.map_or("n/a".to_string(), |v| format!("{v:.3e}")),
    );
    Ok(RunOutcome {
        experiment,
        log,
        csv,
        summary,
        exit_code,
    })
}

/// `v` with 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (11 - v.abs().log10().floor() as i64).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Spectral constants of the configured network.
pub fn spectral_report(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let (graph, w) = build_network(cfg)?;
    let region = ConsensusRegionParams::default_for(cfg.problem.r())?;
    let t_min = min_communication_rounds(&w)?;
    let t = if cfg.t == 0 { t_min } else { cfg.t };
    let alpha_bar = consensus_rate_params(&w, t, &region, None)?.alpha_bar;
    let alpha = if cfg.alpha == 0.0 { alpha_bar } else { cfg.alpha.min(alpha_bar) };
    let rate = consensus_rate_params(&w, t, &region, Some(alpha))?;
    let mut out = String::new();
    let _ = writeln!(out, "graph = {}", cfg.graph);
    let _ = writeln!(out, "n = {}", w.n());
    let _ = writeln!(out, "edges = {}", graph.edges().len());
    let _ = writeln!(out, "sigma2 = {}", fmt_sig12(w.sigma2()));
    let _ = writeln!(out, "t_min = {t_min}");
    let _ = writeln!(out, "t = {t}");
    let _ = writeln!(out, "sigma2_t = {}", fmt_sig12(rate.sigma2_t));
    let _ = writeln!(out, "L_t = {}", fmt_sig12(rate.l_t));
    let _ = writeln!(out, "mu_t = {}", fmt_sig12(rate.mu_t));
    let _ = writeln!(out, "alpha_bar = {}", fmt_sig12(rate.alpha_bar));
    let _ = writeln!(out, "alpha = {}", fmt_sig12(rate.alpha));
    let _ = writeln!(out, "gamma_t = {}", fmt_sig12(rate.gamma_t));
    let _ = writeln!(out, "rho_t = {}", fmt_sig12(rate.rho_t));
    if cfg.alpha > alpha_bar {
        let _ = writeln!(out, "note = requested alpha {} exceeds alpha_bar", cfg.alpha);
    }
    Ok(out)
}

/// The centralized solution of the configured problem.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub text: String,
    pub point: StiefelPoint,
}

impl OracleReport {
    /// `x*` as `d` comma-separated rows.
    pub fn point_csv(&self) -> String {
        let x = self.point.as_matrix();
        let mut out = String::new();
        for row in x.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn oracle_report(cfg: &ExperimentConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let (locals, generated) = build_problem(cfg)?;
    let r = cfg.problem.r();
    let sol = centralized_oracle(&locals, r)?;
    let mut text = String::new();
    let _ = writeln!(text, "problem = {}", cfg.problem);
    let _ = writeln!(text, "d = {}", locals[0].dim());
    let _ = writeln!(text, "r = {r}");
    let shown = sol.eigenvalues.iter().take(r + 1).map(|v| fmt_sig12(*v)).collect::<Vec<_>>();
    let _ = writeln!(text, "leading_eigenvalues = {}", shown.join(", "));
    let _ = writeln!(text, "gap = {}", fmt_sig12(sol.gap));
    if sol.ill_defined() {
        let _ = writeln!(text, "warning = eigengap below 1e-12; the optimal subspace is not unique");
    }
    if let (ProblemSpec::Synthetic { .. }, Some(x)) = (&cfg.problem, &generated) {
        let _ = writeln!(text, "ds_to_generator = {:e}", subspace_distance(&sol.point, x)?);
    }
    Ok(OracleReport { text, point: sol.point })
}
