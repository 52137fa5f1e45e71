//! Points, tangent vectors, the polar retraction and the induced arithmetic
//! mean of a small swarm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stiefel_dec::manifold::{polar_retract, project_to_tangent, random_stiefel, random_tangent, ConsensusRegionParams};
use stiefel_dec::metrics::subspace_distance;
use stiefel_dec::SwarmState;

fn main() -> stiefel_dec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_stiefel(6, 2, &mut rng)?;
    println!("x in St(6, 2), ||x^T x - I|| = {:.1e}", x.orthonormality_error());

    let xi = random_tangent(&x, 0.3, &mut rng);
    let y = polar_retract(&x, &xi)?;
    let back = project_to_tangent(&x, &(y.as_matrix() - x.as_matrix()))?;
    println!(
        "retract along |xi| = 0.3: moved {:.4}, tangent part of the move {:.4}, d_s(x, y) = {:.4}",
        (y.as_matrix() - x.as_matrix()).norm(),
        back.norm(),
        subspace_distance(&x, &y)?
    );

    let pts = (0..5)
        .map(|_| polar_retract(&x, &random_tangent(&x, 0.01, &mut rng)))
        .collect::<stiefel_dec::Result<Vec<_>>>()?;
    let swarm = SwarmState::new(pts)?;
    let snap = swarm.consensus_snapshot()?;
    let region = ConsensusRegionParams::default_for(2)?;
    let check = swarm.consensus_region(&region)?;
    println!(
        "swarm of {}: mean squared deviation {:.3e}, max deviation {:.3e}, in region: {} (margins {:.2e}, {:.2e})",
        swarm.n(),
        snap.consensus_err_sq,
        snap.linf_err,
        check.inside,
        check.mean_square_margin,
        check.max_margin
    );
    Ok(())
}
