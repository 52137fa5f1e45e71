//! Loads a delimiter-separated data file, splits its rows over the agents and
//! runs DRGTA against the centralized solution.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stiefel_dec::algorithms::Algorithm;
use stiefel_dec::harness::{run_experiment, ExperimentConfig, ProblemSpec, ScheduleSpec};
use stiefel_dec::manifold::gaussian_matrix;
use stiefel_dec::problems::{load_dsv_partition, LocalObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 203 samples of a 10-dimensional signal with a few dominant directions.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mixing = gaussian_matrix(10, 10, &mut rng);
    let scales = nalgebra::DVector::from_fn(10, |i, _| 0.7f64.powi(i as i32));
    let samples = gaussian_matrix(203, 10, &mut rng) * nalgebra::DMatrix::from_diagonal(&scales) * mixing;
    let mut text = String::new();
    for row in samples.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(text, "{}", cells.join(" "))?;
    }
    let dir = std::env::temp_dir().join("stiefel-dec-dsv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("samples.txt");
    std::fs::write(&path, text)?;

    let locals = load_dsv_partition(&path, 6, 10.0)?;
    let counts: Vec<usize> = locals.iter().map(|l| l.sample_count()).collect();
    println!("{} rows split over 6 agents as {counts:?}", counts.iter().sum::<usize>());

    let cfg = ExperimentConfig {
        algorithm: Algorithm::Drgta,
        n: 6,
        t: 1,
        alpha: 1.0,
        schedule: ScheduleSpec::User(0.5),
        problem: ProblemSpec::Dsv {
            path: path.clone(),
            r: 2,
            divisor: 10.0,
        },
        max_iters: 3000,
        ..Default::default()
    };
    let out = run_experiment(&cfg)?;
    println!("{}", out.summary);
    Ok(())
}
