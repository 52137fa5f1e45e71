use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{consensus_round, drgta_init, drgta_step, local_riemannian_grads, Mixing, StepsizeSchedule};
use crate::error::{Error, Result};
use crate::manifold::{tangent_part, StiefelPoint, SwarmState};
use crate::metrics::{subspace_distance, IterationRecord};
use crate::problems::{global_riemannian_grad, global_value, LocalObjective};

/// Independent generator for one consumer of the master seed. Agents use
/// streams `0..n`; callers pick distinct streams for anything else.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Drcs,
    Drsgd,
    Drdgd,
    Drgta,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Drcs => "drcs",
            Algorithm::Drsgd => "drsgd",
            Algorithm::Drdgd => "drdgd",
            Algorithm::Drgta => "drgta",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == Algorithm::Drsgd
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drcs" => Ok(Algorithm::Drcs),
            "drsgd" => Ok(Algorithm::Drsgd),
            "drdgd" => Ok(Algorithm::Drdgd),
            "drgta" => Ok(Algorithm::Drgta),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected drcs, drsgd, drdgd or drgta)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub schedule: StepsizeSchedule,
    /// Iterations, or epochs for DRSGD.
    pub max_iters: usize,
    /// Samples per stochastic gradient.
    pub batch_size: usize,
    /// Stop once `d_s(xbar, x*) <= tol_ds` (needs an oracle).
    pub tol_ds: Option<f64>,
    /// Stop once `||grad f(xbar)|| <= tol_grad`.
    pub tol_grad: Option<f64>,
    /// Stop once `(1/n) ||x - xbar||^2 <= tol_consensus`.
    pub tol_consensus: Option<f64>,
    pub seed: u64,
    /// Fill `elapsed_ms`. Off by default so logs are reproducible byte for byte.
    pub timing: bool,
}

impl RunSettings {
    pub fn new(algorithm: Algorithm, alpha: f64, schedule: StepsizeSchedule, max_iters: usize) -> Self {
        Self {
            algorithm,
            alpha,
            schedule,
            max_iters,
            batch_size: 1,
            tol_ds: None,
            tol_grad: None,
            tol_consensus: None,
            seed: 0,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    DsTolerance,
    GradTolerance,
    ConsensusTolerance,
    MaxIterations,
}

impl StopReason {
    pub fn converged(self) -> bool {
        self != StopReason::MaxIterations
    }
}

/// Worst tracking-identity violation seen over a DRGTA run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingStats {
    /// `max_k ||mean(y_k) - mean(grad f_i(x_ik))||_F`.
    pub max_error: f64,
    /// `max_k ||mean(grad f_i(x_ik))||_F`.
    pub max_mean_grad_norm: f64,
}

impl TrackingStats {
    fn observe(&mut self, err: f64, mean_grad_norm: f64) {
        self.max_error = self.max_error.max(err);
        self.max_mean_grad_norm = self.max_mean_grad_norm.max(mean_grad_norm);
    }
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Optimization steps taken (equal to the last `k` except for DRSGD).
    pub steps: usize,
    /// Point-to-point messages exchanged.
    pub messages: u64,
    pub tracking: Option<TrackingStats>,
    pub final_state: SwarmState,
}

impl RunLog {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a log always holds the initial row")
    }

    pub fn final_ds(&self) -> Option<f64> {
        self.last().ds_oracle
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(seed: u64, agent: usize, m: usize) -> Self {
        let mut rng = seeded_stream(seed, agent as u64);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        Self { rng, perm, pos: 0 }
    }

    /// Next mini-batch of the current pass; a pass ends with a short batch
    /// when `batch` does not divide `m`, then the order is reshuffled.
    fn next_batch(&mut self, batch: usize) -> &[usize] {
        if self.pos >= self.perm.len() {
            self.perm.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos = (start + batch).min(self.perm.len());
        &self.perm[start..self.pos]
    }
}

struct Recorder<'a, O> {
    locals: &'a [O],
    oracle: Option<&'a StiefelPoint>,
    start: Instant,
    timing: bool,
}

impl<O: LocalObjective> Recorder<'_, O> {
    fn record(&self, k: usize, s: &SwarmState, beta_k: f64) -> Result<IterationRecord> {
        let snap = s.consensus_snapshot().map_err(|e| at_iteration(e, k))?;
        let grad = global_riemannian_grad(self.locals, &snap.mean)?;
        let ds_oracle = self.oracle.map(|o| subspace_distance(&snap.mean, o)).transpose()?;
        Ok(IterationRecord {
            k,
            consensus_err_sq: snap.consensus_err_sq,
            linf_err: snap.linf_err,
            grad_norm_sq: grad.norm_squared(),
            f_bar: global_value(self.locals, &snap.mean)?,
            ds_oracle,
            beta_k,
            elapsed_ms: self.timing.then(|| self.start.elapsed().as_secs_f64() * 1e3),
        })
    }
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    if e.is_degenerate_mean() {
        Error::DegenerateAt {
            iteration,
            source: Box::new(e),
        }
    } else {
        e
    }
}

fn stop_reason(settings: &RunSettings, rec: &IterationRecord) -> Option<StopReason> {
    if let (Some(tol), Some(ds)) = (settings.tol_ds, rec.ds_oracle) {
        if ds <= tol {
            return Some(StopReason::DsTolerance);
        }
    }
    if let Some(tol) = settings.tol_grad {
        if rec.grad_norm_sq.sqrt() <= tol {
            return Some(StopReason::GradTolerance);
        }
    }
    if let Some(tol) = settings.tol_consensus {
        if rec.consensus_err_sq <= tol {
            return Some(StopReason::ConsensusTolerance);
        }
    }
    None
}

fn stochastic_directions<O: LocalObjective>(
    s: &SwarmState,
    locals: &[O],
    samplers: &mut [Sampler],
    batch: usize,
) -> Result<Vec<DMatrix<f64>>> {
    s.points()
        .par_iter()
        .zip(locals.par_iter())
        .zip(samplers.par_iter_mut())
        .map(|((x, o), sampler)| {
            let egrad = o.stochastic_euclidean_grad(x, sampler.next_batch(batch))?;
            Ok(tangent_part(x.as_matrix(), &egrad))
        })
        .collect()
}

/// Runs one algorithm from `init` and records a metrics row after every
/// iteration (every epoch for DRSGD), starting with the initial state at
/// `k = 0`. Row `k` carries the stepsize of the step that leaves it.
pub fn run<O: LocalObjective, M: Mixing + ?Sized>(
    settings: &RunSettings,
    locals: &[O],
    wt: &M,
    init: SwarmState,
    oracle: Option<&StiefelPoint>,
) -> Result<RunLog> {
    let n = init.n();
    if locals.len() != n {
        return Err(Error::dims("local objectives", n, locals.len()));
    }
    if wt.agents() != n {
        return Err(Error::dims("mixing", n, wt.agents()));
    }
    if let Some(o) = locals.iter().find(|o| o.dim() != init.dims().0) {
        return Err(Error::dims("objective dimension", init.dims().0, o.dim()));
    }
    if let Some(o) = oracle {
        if o.dims() != init.dims() {
            return Err(Error::dims(
                "oracle",
                format!("{:?}", init.dims()),
                format!("{:?}", o.dims()),
            ));
        }
    }
    if !(settings.alpha > 0.0) {
        return Err(Error::param("alpha", format!("{} must be positive", settings.alpha)));
    }
    settings.schedule.validate()?;
    let algo = settings.algorithm;
    if algo.is_stochastic() && settings.batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }

    let recorder = Recorder {
        locals,
        oracle,
        start: Instant::now(),
        timing: settings.timing,
    };
    let beta_at = |step: usize| if algo == Algorithm::Drcs { 0.0 } else { settings.schedule.beta(step) };
    let steps_per_row = if algo.is_stochastic() {
        let max_m = locals.iter().map(|o| o.sample_count()).max().unwrap_or(0);
        max_m.div_ceil(settings.batch_size).max(1)
    } else {
        1
    };
    let mut samplers: Vec<Sampler> = if algo.is_stochastic() {
        (0..n).map(|i| Sampler::new(settings.seed, i, locals[i].sample_count())).collect()
    } else {
        Vec::new()
    };

    let mut s = init;
    let mut tracker = if algo == Algorithm::Drgta {
        Some(drgta_init(&s, locals)?)
    } else {
        None
    };
    let mut tracking = tracker.as_ref().map(|tr| {
        let mut st = TrackingStats::default();
        st.observe(tr.tracking_error(), tr.mean_grad().norm());
        st
    });

    let mut records = vec![recorder.record(0, &s, beta_at(0))?];
    let mut stop = stop_reason(settings, &records[0]);
    let mut step = 0usize;
    let mut messages = 0u64;
    let per_mix = wt.messages_per_application() as u64;

    let mut k = 0;
    while stop.is_none() && k < settings.max_iters {
        k += 1;
        for _ in 0..steps_per_row {
            let beta = beta_at(step);
            s = match algo {
                Algorithm::Drcs => consensus_round(&s, wt, settings.alpha, 0.0, None)?,
                Algorithm::Drdgd => {
                    let dirs = local_riemannian_grads(&s, locals)?;
                    consensus_round(&s, wt, settings.alpha, beta, Some(&dirs))?
                }
                Algorithm::Drsgd => {
                    let dirs = stochastic_directions(&s, locals, &mut samplers, settings.batch_size)?;
                    consensus_round(&s, wt, settings.alpha, beta, Some(&dirs))?
                }
                Algorithm::Drgta => {
                    let tr = tracker.as_ref().expect("tracker initialized for drgta");
                    let (next, next_tr) = drgta_step(&s, tr, wt, settings.alpha, beta, locals)?;
                    if let Some(st) = tracking.as_mut() {
                        st.observe(next_tr.tracking_error(), next_tr.mean_grad().norm());
                    }
                    tracker = Some(next_tr);
                    messages += per_mix;
                    next
                }
            };
            messages += per_mix;
            step += 1;
        }
        let rec = recorder.record(k, &s, beta_at(step))?;
        stop = stop_reason(settings, &rec);
        log::trace!("{} k={k} {}", algo, rec.csv_row());
        records.push(rec);
    }

    Ok(RunLog {
        algorithm: algo,
        records,
        stop: stop.unwrap_or(StopReason::MaxIterations),
        steps: step,
        messages,
        tracking,
        final_state: s,
    })
}
