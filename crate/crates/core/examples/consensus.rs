//! Riemannian consensus (DRCS) on a ring: the stacked deviation from the
//! induced mean shrinks at least geometrically with factor rho_t.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stiefel_dec::algorithms::drcs_step;
use stiefel_dec::manifold::{polar_retract, random_stiefel, random_tangent, ConsensusRegionParams};
use stiefel_dec::network::{consensus_rate_params, metropolis_weights, min_communication_rounds, ring_graph, Mixer};
use stiefel_dec::SwarmState;

fn main() -> stiefel_dec::Result<()> {
    let (n, d, r) = (10, 20, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = metropolis_weights(&ring_graph(n)?)?;
    let t = min_communication_rounds(&w)?;
    let region = ConsensusRegionParams::default_for(r)?;
    let rate = consensus_rate_params(&w, t, &region, None)?;
    let mixer = Mixer::power(&w, t)?;

    let center = random_stiefel(d, r, &mut rng)?;
    let pts = (0..n)
        .map(|_| polar_retract(&center, &random_tangent(&center, 0.01, &mut rng)))
        .collect::<stiefel_dec::Result<Vec<_>>>()?;
    let mut s = SwarmState::new(pts)?;
    println!("t = {t}, alpha = {:.4}, rho_t = {:.4}", rate.alpha, rate.rho_t);

    let mut err = s.stacked_deviation()?;
    for k in 0..=12 {
        println!("k = {k:>2}  ||x - xbar|| = {err:.3e}");
        s = drcs_step(&s, &mixer, rate.alpha)?;
        let next = s.stacked_deviation()?;
        assert!(next <= rate.rho_t * err + 1e-15);
        err = next;
    }
    Ok(())
}
