//! Synchronous iteration schemes over a swarm of Stiefel points.
//!
//! Every step is a barrier-synchronized round: all agents read the frozen
//! previous state, then the new state is assembled in agent order.
//!
//! * [`drcs_step`]: Riemannian consensus, `x_i <- R(alpha P(sum_j W_ij x_j))`.
//! * [`drsgd_step`]: consensus plus a (stochastic) Riemannian gradient step
//!   inside a single retraction. With exact gradients this is DRDGD.
//! * [`drgta_step`]: gradient tracking; the trackers `y_i` follow the network
//!   average of the local Riemannian gradients.

mod runner;
mod schedule;

pub use runner::{run, seeded_stream, Algorithm, RunLog, RunSettings, StopReason, TrackingStats};
pub use schedule::{
    drgta_max_stepsize, drgta_theoretical_stepsize, drsgd_constant_min_iterations, drsgd_constant_schedule,
    drsgd_diminishing_schedule, DrgtaStepsizeDiagnostic, StepsizeSchedule,
};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{retract_ambient, tangent_part, StiefelPoint, SwarmState, TangentVector};
use crate::network::{mix_matrices, Mixer, MixingMatrix};
use crate::problems::LocalObjective;

/// Anything that can apply `W^t` to one matrix per agent.
pub trait Mixing: Sync {
    fn agents(&self) -> usize;
    fn apply(&self, values: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>>;
    /// Point-to-point messages sent by one call to [`Mixing::apply`].
    fn messages_per_application(&self) -> usize;
}

impl Mixing for MixingMatrix {
    fn agents(&self) -> usize {
        self.n()
    }

    fn apply(&self, values: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        mix_matrices(values, self)
    }

    fn messages_per_application(&self) -> usize {
        self.message_count()
    }
}

impl Mixing for Mixer {
    fn agents(&self) -> usize {
        self.n()
    }

    fn apply(&self, values: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        Mixer::apply(self, values)
    }

    fn messages_per_application(&self) -> usize {
        Mixer::messages_per_application(self)
    }
}

/// Consensus and gradient stepsizes of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusConfig {
    pub alpha: f64,
    pub t: usize,
}

impl ConsensusConfig {
    pub fn new(alpha: f64, t: usize) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::param("alpha", format!("{alpha} must be positive")));
        }
        if t < 1 {
            return Err(Error::param("t", "communication rounds must be at least 1"));
        }
        Ok(Self { alpha, t })
    }
}

fn mixed_points<M: Mixing + ?Sized>(s: &SwarmState, wt: &M) -> Result<Vec<DMatrix<f64>>> {
    if wt.agents() != s.n() {
        return Err(Error::dims("mixing", wt.agents(), s.n()));
    }
    let values: Vec<DMatrix<f64>> = s.points().iter().map(|p| p.as_matrix().clone()).collect();
    wt.apply(&values)
}

/// `x_i <- R_{x_i}(alpha P_{x_i}(sum_j W_ij x_j) - beta d_i)` for every agent,
/// where `d_i` is an ambient direction already tangent at `x_i`.
fn consensus_round<M: Mixing + ?Sized>(
    s: &SwarmState,
    wt: &M,
    alpha: f64,
    beta: f64,
    directions: Option<&[DMatrix<f64>]>,
) -> Result<SwarmState> {
    let mixed = mixed_points(s, wt)?;
    let points: Vec<StiefelPoint> = s
        .points()
        .par_iter()
        .zip(mixed.par_iter())
        .enumerate()
        .map(|(i, (x, m))| {
            let mut step = tangent_part(x.as_matrix(), m) * alpha;
            if let Some(dirs) = directions {
                step.zip_apply(&dirs[i], |s, g| *s -= beta * g);
            }
            retract_ambient(x.as_matrix(), &step)
        })
        .collect();
    SwarmState::new(points)
}

/// One DRCS round.
pub fn drcs_step<M: Mixing + ?Sized>(s: &SwarmState, wt: &M, alpha: f64) -> Result<SwarmState> {
    consensus_round(s, wt, alpha, 0.0, None)
}

/// One DRSGD round with per-agent Riemannian (stochastic) gradients
/// `grads[i]` attached to `s.points()[i]`.
pub fn drsgd_step<M: Mixing + ?Sized>(
    s: &SwarmState,
    wt: &M,
    alpha: f64,
    beta: f64,
    grads: &[TangentVector],
) -> Result<SwarmState> {
    if grads.len() != s.n() {
        return Err(Error::dims("drsgd_step gradients", s.n(), grads.len()));
    }
    if !(beta >= 0.0) {
        return Err(Error::param("beta", format!("{beta} must be nonnegative")));
    }
    if let Some(i) = (0..s.n()).find(|&i| grads[i].base() != &s.points()[i]) {
        return Err(Error::Contract(format!(
            "gradient {i} is not attached to agent {i}'s current point"
        )));
    }
    let dirs: Vec<DMatrix<f64>> = grads.iter().map(|g| g.as_matrix().clone()).collect();
    consensus_round(s, wt, alpha, beta, Some(&dirs))
}

/// Local Riemannian gradients `grad f_i(x_i)`, in agent order.
pub fn local_riemannian_grads<O: LocalObjective>(s: &SwarmState, locals: &[O]) -> Result<Vec<DMatrix<f64>>> {
    if locals.len() != s.n() {
        return Err(Error::dims("local objectives", s.n(), locals.len()));
    }
    s.points()
        .par_iter()
        .zip(locals.par_iter())
        .map(|(x, o)| Ok(tangent_part(x.as_matrix(), &o.euclidean_grad(x)?)))
        .collect()
}

/// Gradient trackers `y_i` and the local gradients they were last corrected
/// with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    y: Vec<DMatrix<f64>>,
    grads: Vec<DMatrix<f64>>,
}

impl TrackerState {
    pub fn y(&self) -> &[DMatrix<f64>] {
        &self.y
    }

    /// `grad f_i(x_i)` at the points the trackers belong to.
    pub fn local_grads(&self) -> &[DMatrix<f64>] {
        &self.grads
    }

    /// `(1/n) sum_i y_i`.
    pub fn mean_y(&self) -> DMatrix<f64> {
        mean(&self.y)
    }

    /// `(1/n) sum_i grad f_i(x_i)`.
    pub fn mean_grad(&self) -> DMatrix<f64> {
        mean(&self.grads)
    }

    /// `||(1/n) sum_i y_i - (1/n) sum_i grad f_i(x_i)||_F`.
    pub fn tracking_error(&self) -> f64 {
        (self.mean_y() - self.mean_grad()).norm()
    }
}

fn mean(values: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(values[0].nrows(), values[0].ncols());
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

/// `y_i = grad f_i(x_i)`.
pub fn drgta_init<O: LocalObjective>(s: &SwarmState, locals: &[O]) -> Result<TrackerState> {
    let grads = local_riemannian_grads(s, locals)?;
    Ok(TrackerState {
        y: grads.clone(),
        grads,
    })
}

/// One DRGTA round:
///
/// ```text
/// v_i  = P_{x_i}(y_i)
/// x_i+ = R_{x_i}(alpha P_{x_i}(sum_j W_ij x_j) - beta v_i)
/// y_i+ = sum_j W_ij y_j + grad f_i(x_i+) - grad f_i(x_i)
/// ```
pub fn drgta_step<M: Mixing + ?Sized, O: LocalObjective>(
    s: &SwarmState,
    tracker: &TrackerState,
    wt: &M,
    alpha: f64,
    beta: f64,
    locals: &[O],
) -> Result<(SwarmState, TrackerState)> {
    if tracker.y.len() != s.n() || tracker.grads.len() != s.n() {
        return Err(Error::dims("tracker", s.n(), tracker.y.len()));
    }
    if let Some(y) = tracker.y.iter().find(|y| y.shape() != s.dims()) {
        return Err(Error::dims(
            "tracker entry",
            format!("{:?}", s.dims()),
            format!("{:?}", y.shape()),
        ));
    }
    let directions: Vec<DMatrix<f64>> = s
        .points()
        .par_iter()
        .zip(tracker.y.par_iter())
        .map(|(x, y)| tangent_part(x.as_matrix(), y))
        .collect();
    let next = consensus_round(s, wt, alpha, beta, Some(&directions))?;
    let mixed_y = wt.apply(&tracker.y)?;
    let grads = local_riemannian_grads(&next, locals)?;
    let y = mixed_y
        .into_par_iter()
        .zip(grads.par_iter().zip(tracker.grads.par_iter()))
        .map(|(mut yi, (g_new, g_old))| {
            yi += g_new;
            yi -= g_old;
            yi
        })
        .collect();
    Ok((next, TrackerState { y, grads }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{polar_retract, project_to_tangent, random_stiefel, random_tangent};
    use crate::network::{metropolis_weights, ring_graph};
    use crate::problems::{synthesize_eigengap_data, EigLocal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn perturbed_swarm(n: usize, d: usize, r: usize, scale: f64, seed: u64) -> SwarmState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_stiefel(d, r, &mut rng).unwrap();
        let pts = (0..n)
            .map(|_| polar_retract(&x, &random_tangent(&x, scale, &mut rng)).unwrap())
            .collect();
        SwarmState::new(pts).unwrap()
    }

    #[test]
    fn drcs_fixes_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_stiefel(5, 2, &mut rng).unwrap();
        let s = SwarmState::replicate(&x, 4).unwrap();
        let w = metropolis_weights(&ring_graph(4).unwrap()).unwrap();
        let next = drcs_step(&s, &w, 1.0).unwrap();
        for p in next.points() {
            assert!((p.as_matrix() - x.as_matrix()).amax() < 1e-15);
        }
    }

    #[test]
    fn drcs_two_agent_hand_example() {
        let s = SwarmState::new(vec![
            StiefelPoint::new(col(&[1.0, 0.0])).unwrap(),
            StiefelPoint::new(col(&[0.0, 1.0])).unwrap(),
        ])
        .unwrap();
        let w = MixingMatrix::uniform(2).unwrap();
        let next = drcs_step(&s, &w, 1.0).unwrap();

        // formula oracle: mixed point m = [1/2, 1/2], tangent part (I - x x^T) m
        for (i, x) in s.points().iter().enumerate() {
            let m = col(&[0.5, 0.5]);
            let xm = x.as_matrix();
            let tangent = &m - xm * (xm.transpose() * &m);
            let v = xm + tangent;
            let expected = &v / v.norm();
            assert!((next.points()[i].as_matrix() - expected).amax() < 1e-15);
        }
        let s5 = 5f64.sqrt();
        assert!((next.points()[0].as_matrix() - col(&[2.0 / s5, 1.0 / s5])).amax() < 1e-15);
        assert!((next.points()[1].as_matrix() - col(&[1.0 / s5, 2.0 / s5])).amax() < 1e-15);
    }

    #[test]
    fn drsgd_with_zero_beta_is_drcs() {
        let s = perturbed_swarm(6, 7, 2, 0.05, 3);
        let w = metropolis_weights(&ring_graph(6).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grads: Vec<TangentVector> = s.points().iter().map(|x| random_tangent(x, 1.0, &mut rng)).collect();
        let a = drsgd_step(&s, &w, 0.7, 0.0, &grads).unwrap();
        let b = drcs_step(&s, &w, 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drsgd_single_agent_is_centralized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let local = EigLocal::new(crate::manifold::gaussian_matrix(9, 4, &mut rng)).unwrap();
        let x = random_stiefel(4, 2, &mut rng).unwrap();
        let g = project_to_tangent(&x, &local.euclidean_grad(&x).unwrap()).unwrap();
        let s = SwarmState::replicate(&x, 1).unwrap();
        let w = MixingMatrix::uniform(1).unwrap();
        let next = drsgd_step(&s, &w, 1.0, 0.01, std::slice::from_ref(&g)).unwrap();
        let expected = polar_retract(&x, &g.scale(-0.01)).unwrap();
        assert!((next.points()[0].as_matrix() - expected.as_matrix()).amax() < 1e-14);
    }

    #[test]
    fn drsgd_rejects_foreign_gradients() {
        let s = perturbed_swarm(3, 5, 2, 0.05, 6);
        let w = MixingMatrix::uniform(3).unwrap();
        let grads: Vec<TangentVector> = s.points().iter().rev().map(TangentVector::zero).collect();
        assert!(matches!(drsgd_step(&s, &w, 1.0, 0.1, &grads), Err(Error::Contract(_))));
        assert!(drsgd_step(&s, &w, 1.0, 0.1, &grads[..2]).is_err());
    }

    #[test]
    fn drsgd_at_oracle_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = synthesize_eigengap_data(4, 20, 6, 2, 0.8, &mut rng).unwrap();
        let s = SwarmState::replicate(&data.oracle, 4).unwrap();
        let w = metropolis_weights(&ring_graph(4).unwrap()).unwrap();
        // full Riemannian gradient of f = (1/n) sum f_i, identical on every agent
        let g = crate::problems::global_riemannian_grad(&data.locals, &data.oracle).unwrap();
        let grads: Vec<TangentVector> = (0..4)
            .map(|_| TangentVector::new(data.oracle.clone(), g.clone()).unwrap())
            .collect();
        let next = drsgd_step(&s, &w, 1.0, 1e-3, &grads).unwrap();
        for p in next.points() {
            assert!((p.as_matrix() - data.oracle.as_matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn drgta_init_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = synthesize_eigengap_data(4, 20, 6, 2, 0.8, &mut rng).unwrap();
        let s = SwarmState::replicate(&data.oracle, 4).unwrap();
        let tr = drgta_init(&s, &data.locals).unwrap();
        let scale = tr.y().iter().map(|y| y.norm()).fold(0.0, f64::max);
        assert!(tr.mean_y().norm() <= 1e-10 * scale.max(1.0));
        assert_eq!(tr.tracking_error(), 0.0);

        let identity_locals: Vec<EigLocal> = (0..4).map(|_| EigLocal::new(DMatrix::identity(6, 6)).unwrap()).collect();
        let x = random_stiefel(6, 2, &mut rng).unwrap();
        let tr = drgta_init(&SwarmState::replicate(&x, 4).unwrap(), &identity_locals).unwrap();
        assert!(tr.y().iter().all(|y| y.amax() < 1e-15));
    }

    #[test]
    fn drgta_tracks_average_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = synthesize_eigengap_data(6, 15, 8, 2, 0.8, &mut rng).unwrap();
        let w = metropolis_weights(&ring_graph(6).unwrap()).unwrap();
        let mut s = perturbed_swarm(6, 8, 2, 0.01, 10);
        let mut tr = drgta_init(&s, &data.locals).unwrap();
        for _ in 0..50 {
            let (ns, nt) = drgta_step(&s, &tr, &w, 1.0, 0.05 / 15.0, &data.locals).unwrap();
            s = ns;
            tr = nt;
            let fresh = local_riemannian_grads(&s, &data.locals).unwrap();
            assert_eq!(tr.local_grads(), fresh.as_slice());
            assert!(tr.tracking_error() <= 1e-10 * (1.0 + tr.mean_grad().norm()));
        }
    }

    #[test]
    fn drgta_without_gradients_is_drcs() {
        let s = perturbed_swarm(5, 6, 2, 0.05, 11);
        let w = metropolis_weights(&ring_graph(5).unwrap()).unwrap();
        let locals: Vec<EigLocal> = (0..5).map(|_| EigLocal::new(DMatrix::identity(6, 6)).unwrap()).collect();
        let tr = drgta_init(&s, &locals).unwrap();
        let (a, _) = drgta_step(&s, &tr, &w, 1.0, 0.0, &locals).unwrap();
        assert_eq!(a, drcs_step(&s, &w, 1.0).unwrap());
    }

    #[test]
    fn drgta_single_agent_tracks_exact_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let local = EigLocal::new(crate::manifold::gaussian_matrix(9, 4, &mut rng)).unwrap();
        let locals = [local];
        let w = MixingMatrix::uniform(1).unwrap();
        let mut s = SwarmState::replicate(&random_stiefel(4, 2, &mut rng).unwrap(), 1).unwrap();
        let mut tr = drgta_init(&s, &locals).unwrap();
        for _ in 0..10 {
            let (ns, nt) = drgta_step(&s, &tr, &w, 1.0, 0.01, &locals).unwrap();
            let g = local_riemannian_grads(&ns, &locals).unwrap();
            assert!((&nt.y()[0] - &g[0]).amax() < 1e-12);
            s = ns;
            tr = nt;
        }
    }
}
