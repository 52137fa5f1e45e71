//! Centralized solution of a synthetic instance and subspace distances to
//! random and perturbed frames.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stiefel_dec::manifold::{polar_retract, random_stiefel, random_tangent};
use stiefel_dec::metrics::subspace_distance;
use stiefel_dec::problems::{centralized_oracle, global_value, synthesize_eigengap_data};

fn main() -> stiefel_dec::Result<()> {
    let (n, m, d, r) = (4, 25, 12, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = synthesize_eigengap_data(n, m, d, r, 0.8, &mut rng)?;
    let sol = centralized_oracle(&data.locals, r)?;
    println!(
        "top eigenvalues {:.4?}, gap {:.4}",
        &sol.eigenvalues[..=r],
        sol.gap
    );
    println!(
        "oracle vs generator frame: d_s = {:.2e}, f(x*) = {:.6}",
        subspace_distance(&sol.point, &data.oracle)?,
        global_value(&data.locals, &sol.point)?
    );

    let random = random_stiefel(d, r, &mut rng)?;
    println!(
        "random frame: d_s = {:.4} (at most sqrt(2r) = {:.4}), f = {:.6}",
        subspace_distance(&sol.point, &random)?,
        (2.0 * r as f64).sqrt(),
        global_value(&data.locals, &random)?
    );
    for eps in [1e-1, 1e-2, 1e-3] {
        let near = polar_retract(&sol.point, &random_tangent(&sol.point, eps, &mut rng))?;
        println!("tangent step {eps:.0e}: d_s = {:.3e}", subspace_distance(&sol.point, &near)?);
    }
    Ok(())
}
