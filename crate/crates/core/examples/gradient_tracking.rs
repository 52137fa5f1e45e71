//! DRGTA against DRDGD with the same constant stepsize: gradient tracking
//! reaches the optimal subspace, the plain method stalls at a plateau.

use stiefel_dec::algorithms::Algorithm;
use stiefel_dec::harness::{Experiment, ExperimentConfig, ProblemSpec, ScheduleSpec};

fn main() -> stiefel_dec::Result<()> {
    for algorithm in [Algorithm::Drgta, Algorithm::Drdgd] {
        let cfg = ExperimentConfig {
            algorithm,
            n: 8,
            t: 1,
            alpha: 1.0,
            schedule: ScheduleSpec::User(0.05),
            problem: ProblemSpec::Synthetic { d: 20, r: 3, m: 50, gap: 0.8 },
            max_iters: 5000,
            seed: 11,
            ..Default::default()
        };
        let mut exp = Experiment::prepare(&cfg)?;
        exp.settings.tol_ds = Some(1e-8);
        let log = exp.run()?;
        let last = log.last();
        print!(
            "{algorithm}: {:?} after {} iterations, d_s = {:.3e}, ||grad f(xbar)|| = {:.3e}",
            log.stop,
            last.k,
            last.ds_oracle.unwrap_or(f64::NAN),
            last.grad_norm_sq.sqrt()
        );
        match log.tracking {
            Some(t) => println!(", max tracking error {:.1e}", t.max_error),
            None => println!(),
        }
    }
    Ok(())
}
