//! Decentralized Riemannian SGD on a synthetic eigenvector problem, driven
//! through the experiment harness. The theoretical diminishing schedule is
//! safe but slow; a hand-tuned stepsize makes visible progress.

use stiefel_dec::algorithms::Algorithm;
use stiefel_dec::harness::{run_experiment, ExperimentConfig, ProblemSpec, ScheduleSpec};

fn main() -> stiefel_dec::Result<()> {
    for schedule in [ScheduleSpec::Diminishing, ScheduleSpec::User(2.0)] {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Drsgd,
            n: 8,
            t: 0,
            alpha: 0.0,
            schedule,
            problem: ProblemSpec::Synthetic { d: 20, r: 3, m: 200, gap: 0.8 },
            max_epochs: 100,
            batch_size: 10,
            seed: 5,
            ..Default::default()
        };
        let out = run_experiment(&cfg)?;
        let first = &out.log.records[0];
        let last = out.log.last();
        println!(
            "{schedule:<12} beta_0 = {:.3e}: d_s {:.3e} -> {:.3e}, consensus {:.1e} -> {:.1e} after {} epochs",
            out.experiment.settings.schedule.beta(0),
            first.ds_oracle.unwrap_or(f64::NAN),
            last.ds_oracle.unwrap_or(f64::NAN),
            first.consensus_err_sq,
            last.consensus_err_sq,
            last.k
        );
    }
    Ok(())
}
