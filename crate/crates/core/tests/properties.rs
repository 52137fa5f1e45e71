//! Randomized invariants of the manifold, network, problem and algorithm
//! layers.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stiefel_dec::algorithms::{drcs_step, drgta_init, drgta_step, drsgd_diminishing_schedule, drsgd_step};
use stiefel_dec::manifold::{
    gaussian_matrix, polar_retract, project_to_tangent, random_stiefel, random_tangent, ConsensusRegionParams,
};
use stiefel_dec::metrics::subspace_distance;
use stiefel_dec::network::{
    consensus_rate_params, erdos_renyi, matrix_power, metropolis_weights, mix, ring_graph, Mixer, MixingMatrix,
};
use stiefel_dec::problems::{quadratic_constants, synthesize_eigengap_data, EigLocal, LocalObjective};
use stiefel_dec::{StiefelPoint, SwarmState, TangentVector};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=8).prop_flat_map(|d| (Just(d), 1usize..=d))
}

/// `n` points retracted from a common center along tangents of norm `scale`.
fn swarm_around(x: &StiefelPoint, n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SwarmState {
    let pts = (0..n)
        .map(|_| polar_retract(x, &random_tangent(x, scale, rng)).unwrap())
        .collect();
    SwarmState::new(pts).unwrap()
}

fn swarm(n: usize, d: usize, r: usize, scale: f64, rng: &mut ChaCha8Rng) -> SwarmState {
    let x = random_stiefel(d, r, rng).unwrap();
    swarm_around(&x, n, scale, rng)
}

fn stacked_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn retraction_is_feasible_and_nonexpansive(seed in any::<u64>(), (d, r) in dims(), scale in 0.0f64..3.0) {
        let mut g = rng(seed);
        let x = random_stiefel(d, r, &mut g).unwrap();
        let xi = random_tangent(&x, scale, &mut g);
        let y = random_stiefel(d, r, &mut g).unwrap();
        let p = polar_retract(&x, &xi).unwrap();
        prop_assert!(p.orthonormality_error() < 1e-12);
        let lhs = (p.as_matrix() - y.as_matrix()).norm();
        let rhs = (x.as_matrix() + xi.as_matrix() - y.as_matrix()).norm();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn retraction_is_second_order(seed in any::<u64>(), (d, r) in dims(), scale in 0.0f64..=1.0) {
        let mut g = rng(seed);
        let x = random_stiefel(d, r, &mut g).unwrap();
        let xi = random_tangent(&x, scale, &mut g);
        let p = polar_retract(&x, &xi).unwrap();
        let gap = (p.as_matrix() - x.as_matrix() - xi.as_matrix()).norm();
        prop_assert!(gap <= scale * scale + 1e-12, "{gap} > {}", scale * scale);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint(seed in any::<u64>(), (d, r) in dims()) {
        let mut g = rng(seed);
        let x = random_stiefel(d, r, &mut g).unwrap();
        let y = gaussian_matrix(d, r, &mut g);
        let z = gaussian_matrix(d, r, &mut g);
        let py = project_to_tangent(&x, &y).unwrap().into_matrix();
        let pz = project_to_tangent(&x, &z).unwrap().into_matrix();
        let ppy = project_to_tangent(&x, &py).unwrap().into_matrix();
        prop_assert!((&ppy - &py).norm() <= 1e-12 * (1.0 + py.norm()));
        let (a, b) = (py.dot(&z), y.dot(&pz));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + y.norm() * z.norm()));
    }

    #[test]
    fn subspace_distance_is_bounded_and_triangular(seed in any::<u64>(), (d, r) in dims()) {
        let mut g = rng(seed);
        let x = random_stiefel(d, r, &mut g).unwrap();
        let y = random_stiefel(d, r, &mut g).unwrap();
        let z = random_stiefel(d, r, &mut g).unwrap();
        let xy = subspace_distance(&x, &y).unwrap();
        let yz = subspace_distance(&y, &z).unwrap();
        let xz = subspace_distance(&x, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-9);
        prop_assert!(xy * xy <= 2.0 * r as f64 + 1e-12);
    }

    #[test]
    fn metropolis_weights_are_doubly_stochastic(seed in any::<u64>(), n in 2usize..=24, p in 0.15f64..=1.0) {
        let graph = erdos_renyi(n, p, &mut rng(seed)).unwrap();
        let w = metropolis_weights(&graph).unwrap();
        let m = w.as_matrix();
        prop_assert!((m - m.transpose()).amax() <= 1e-14);
        for i in 0..n {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(m[(i, i)] > 0.0 && m[(i, i)] < 1.0);
            for j in 0..n {
                prop_assert!(m[(i, j)] >= 0.0);
                if i != j && !graph.neighbors(i).contains(&j) {
                    prop_assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        prop_assert!(w.sigma2() < 1.0);
        prop_assert!(MixingMatrix::new(m.clone()).is_ok());
    }

    #[test]
    fn mixing_contracts_towards_the_euclidean_mean(seed in any::<u64>(), n in 2usize..=12, t in 1usize..=4) {
        let mut g = rng(seed);
        let w = metropolis_weights(&erdos_renyi(n, 0.4, &mut g).unwrap()).unwrap();
        let s = swarm(n, 6, 2, 0.8, &mut g);
        let mean = s.euclidean_mean();
        let hat = vec![mean; n];
        let points: Vec<DMatrix<f64>> = s.points().iter().map(|p| p.as_matrix().clone()).collect();
        let mixed = Mixer::power(&w, t).unwrap().apply(&points).unwrap();
        let lhs = stacked_diff(&mixed, &hat);
        let rhs = w.sigma2().powi(t as i32) * stacked_diff(&points, &hat);
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn consensus_gradient_bounds(seed in any::<u64>(), n in 2usize..=10, t in 1usize..=3, scale in 0.01f64..1.0) {
        let mut g = rng(seed);
        let w = metropolis_weights(&erdos_renyi(n, 0.5, &mut g).unwrap()).unwrap();
        let s = swarm(n, 7, 3, scale, &mut g);
        let Ok(mean) = s.induced_arithmetic_mean() else {
            return Ok(());
        };
        let region = ConsensusRegionParams::default_for(3).unwrap();
        let l_t = consensus_rate_params(&w, t, &region, None).unwrap().l_t;
        let wt_x = mix(&s, &matrix_power(&w, t).unwrap()).unwrap();
        let grads: Vec<DMatrix<f64>> = s
            .points()
            .iter()
            .zip(&wt_x)
            .map(|(x, m)| -project_to_tangent(x, m).unwrap().into_matrix())
            .collect();
        let dev_sq = s.deviation_from(&mean).0;
        let norm = grads.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        let total = grads.iter().fold(DMatrix::zeros(7, 3), |acc, v| acc + v).norm();
        prop_assert!(norm <= l_t * dev_sq.sqrt() + 1e-12, "{norm} > {}", l_t * dev_sq.sqrt());
        prop_assert!(total <= l_t * dev_sq + 1e-12, "{total} > {}", l_t * dev_sq);
    }

    #[test]
    fn two_average_bound(seed in any::<u64>(), n in 2usize..=10, (d, r) in dims()) {
        let mut g = rng(seed);
        let region = ConsensusRegionParams::default_for(r).unwrap();
        let delta1 = region.delta1();
        let center = random_stiefel(d, r, &mut g).unwrap();
        let x = swarm_around(&center, n, 0.5 * delta1, &mut g);
        let y = swarm_around(&center, n, 0.5 * delta1, &mut g);
        prop_assume!(x.consensus_region(&region).unwrap().mean_square_margin >= 0.0);
        prop_assume!(y.consensus_region(&region).unwrap().mean_square_margin >= 0.0);
        let bar = (x.induced_arithmetic_mean().unwrap().into_matrix()
            - y.induced_arithmetic_mean().unwrap().into_matrix())
        .norm();
        let hat = (x.euclidean_mean() - y.euclidean_mean()).norm();
        prop_assert!(bar <= hat / (1.0 - 2.0 * delta1 * delta1) + 1e-12, "{bar} > {hat}");
    }

    #[test]
    fn minibatch_gradients_average_to_the_full_gradient(seed in any::<u64>(), batch in 1usize..=6, passes in 1usize..=4) {
        let mut g = rng(seed);
        let m = batch * passes;
        let local = EigLocal::new(gaussian_matrix(m, 5, &mut g)).unwrap();
        let x = gaussian_matrix(5, 2, &mut g);
        let full = local.egrad_ambient(&x).unwrap();
        let mut sum = DMatrix::zeros(5, 2);
        for k in 0..passes {
            let ids: Vec<usize> = (k * batch..(k + 1) * batch).collect();
            sum += local.stochastic_egrad(&x, &ids).unwrap();
        }
        let mean = sum / passes as f64;
        prop_assert!((&mean - &full).norm() <= 1e-12 * (1.0 + full.norm()));
    }
}

#[test]
fn single_column_subspace_distance_matches_sign_search() {
    let mut g = rng(5);
    for _ in 0..1000 {
        let d = g.random_range(2..9);
        let x = random_stiefel(d, 1, &mut g).unwrap();
        let y = random_stiefel(d, 1, &mut g).unwrap();
        let brute = (x.as_matrix() - y.as_matrix())
            .norm()
            .min((x.as_matrix() + y.as_matrix()).norm());
        assert!((subspace_distance(&x, &y).unwrap() - brute).abs() <= 1e-12);
    }
}

#[test]
fn iam_stays_close_to_the_euclidean_mean() {
    let mut g = rng(9);
    let mut checked = 0;
    for trial in 0..500 {
        let (n, d, r) = (2 + trial % 9, 4 + trial % 5, 1 + trial % 4);
        let s = swarm(n, d, r, 0.05 + 0.9 * (trial as f64 / 500.0), &mut g);
        let mean = s.euclidean_mean();
        let hat_dev: f64 = s.points().iter().map(|p| (p.as_matrix() - &mean).norm_squared()).sum();
        let Ok(bar) = s.induced_arithmetic_mean() else {
            continue;
        };
        let dev_sq = s.deviation_from(&bar).0;
        if dev_sq > n as f64 / 2.0 {
            continue;
        }
        let gap = (bar.as_matrix() - &mean).norm();
        assert!(gap <= 2.0 * (r as f64).sqrt() * dev_sq / n as f64 + 1e-12);
        assert!(hat_dev <= dev_sq + 1e-12);
        checked += 1;
    }
    assert!(checked > 400, "only {checked} swarms inside the ball");
}

struct Fixture {
    locals: Vec<EigLocal>,
    w: MixingMatrix,
    region: ConsensusRegionParams,
    start: SwarmState,
}

fn fixture(n: usize, d: usize, r: usize, m: usize, seed: u64) -> Fixture {
    let mut g = rng(seed);
    let data = synthesize_eigengap_data(n, m, d, r, 0.8, &mut g).unwrap();
    let w = metropolis_weights(&ring_graph(n).unwrap()).unwrap();
    let region = ConsensusRegionParams::default_for(r).unwrap();
    let center = random_stiefel(d, r, &mut g).unwrap();
    let mut scale = 0.5 * region.delta1();
    let start = loop {
        let s = swarm_around(&center, n, scale, &mut g);
        if s.in_consensus_region(&region).unwrap() {
            break s;
        }
        scale *= 0.5;
    };
    Fixture {
        locals: data.locals,
        w,
        region,
        start,
    }
}

fn stochastic_grads(s: &SwarmState, locals: &[EigLocal], g: &mut ChaCha8Rng) -> Vec<TangentVector> {
    s.points()
        .iter()
        .zip(locals)
        .map(|(x, o)| {
            let k = g.random_range(0..o.sample_count());
            project_to_tangent(x, &o.stochastic_euclidean_grad(x, &[k]).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn every_algorithm_stays_feasible() {
    let f = fixture(6, 8, 2, 20, 1);
    let wt = Mixer::power(&f.w, 2).unwrap();
    let mut g = rng(2);
    let (mut a, mut b, mut c) = (f.start.clone(), f.start.clone(), f.start.clone());
    let mut tracker = drgta_init(&c, &f.locals).unwrap();
    for _ in 0..100 {
        a = drcs_step(&a, &wt, 1.0).unwrap();
        let grads = stochastic_grads(&b, &f.locals, &mut g);
        b = drsgd_step(&b, &wt, 1.0, 1e-3, &grads).unwrap();
        (c, tracker) = drgta_step(&c, &tracker, &wt, 1.0, 1e-3, &f.locals).unwrap();
        for s in [&a, &b, &c] {
            assert!(s.points().iter().all(|p| p.orthonormality_error() < 1e-12));
        }
    }
}

#[test]
fn drsgd_stays_in_the_consensus_region_under_the_safe_stepsize() {
    let f = fixture(8, 10, 2, 30, 3);
    let t = 2;
    let rate = consensus_rate_params(&f.w, t, &f.region, None).unwrap();
    let c = quadratic_constants(&f.locals, 2).unwrap();
    let schedule = drsgd_diminishing_schedule(&c, rate.rho_t, rate.alpha, f.region.delta1()).unwrap();
    let wt = Mixer::power(&f.w, t).unwrap();
    let mut g = rng(4);
    let mut s = f.start.clone();
    for k in 0..400 {
        let grads = stochastic_grads(&s, &f.locals, &mut g);
        s = drsgd_step(&s, &wt, rate.alpha, schedule.beta(k), &grads).unwrap();
        assert!(s.in_consensus_region(&f.region).unwrap(), "left the region at step {k}");
    }
}

#[test]
fn drsgd_consensus_error_stays_within_the_geometric_bound() {
    let f = fixture(8, 10, 2, 30, 6);
    let t = 2;
    let n = 8.0_f64;
    let rate = consensus_rate_params(&f.w, t, &f.region, None).unwrap();
    let c = quadratic_constants(&f.locals, 2).unwrap();
    let beta = drsgd_diminishing_schedule(&c, rate.rho_t, rate.alpha, f.region.delta1())
        .unwrap()
        .beta(0);
    let wt = Mixer::power(&f.w, t).unwrap();
    let bound = n.sqrt() * c.d * beta / (1.0 - rate.rho_t);
    let mut g = rng(7);
    let mut s = f.start.clone();
    let mut tail = 0.0_f64;
    for k in 0..600 {
        let grads = stochastic_grads(&s, &f.locals, &mut g);
        s = drsgd_step(&s, &wt, rate.alpha, beta, &grads).unwrap();
        if k >= 300 {
            tail = tail.max(s.stacked_deviation().unwrap() / n.sqrt());
        }
    }
    assert!(tail > 0.0 && tail <= bound, "{tail} > {bound}");
}
