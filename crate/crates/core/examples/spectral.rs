//! Mixing matrices and consensus-rate constants for a few topologies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stiefel_dec::manifold::ConsensusRegionParams;
use stiefel_dec::network::{
    complete_graph, consensus_rate_params, erdos_renyi, metropolis_weights, min_communication_rounds, ring_graph,
};

fn main() -> stiefel_dec::Result<()> {
    let region = ConsensusRegionParams::default_for(5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let graphs = [
        ("ring(16)", ring_graph(16)?),
        ("er(16, 0.3)", erdos_renyi(16, 0.3, &mut rng)?),
        ("complete(16)", complete_graph(16)?),
    ];
    println!("{:<14} {:>6} {:>9} {:>6} {:>9} {:>9}", "graph", "edges", "sigma2", "t_min", "alpha_bar", "rho_t");
    for (name, g) in &graphs {
        let w = metropolis_weights(g)?;
        let t = min_communication_rounds(&w)?;
        let rate = consensus_rate_params(&w, t, &region, None)?;
        println!(
            "{name:<14} {:>6} {:>9.6} {t:>6} {:>9.6} {:>9.6}",
            g.edges().len(),
            w.sigma2(),
            rate.alpha_bar,
            rate.rho_t
        );
    }
    Ok(())
}
