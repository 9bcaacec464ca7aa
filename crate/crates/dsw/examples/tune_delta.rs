//! Grid search for the regularization weight on the tuning seed.
//!
//! Usage: `tune_delta [max_cg]`. Writes one CSV row per candidate to stdout
//! and the winner per (example, noise level) to stderr.

use dsw::experiments::{tune_delta, ExperimentSpec, DELTA_GRID, NOISE_LEVELS, TUNING_SEED};
use dsw_core::ExampleId;

fn main() {
    let max_cg: Option<usize> = std::env::args().nth(1).map(|s| s.parse().expect("max_cg"));
    println!("example,noise,seed,delta,e,iterations,final_J,status");
    for id in ExampleId::ALL {
        for noise in NOISE_LEVELS {
            let mut base = ExperimentSpec::new(id, noise, TUNING_SEED);
            if let Some(m) = max_cg {
                base.max_cg_iters = m;
            }
            let log = tune_delta(&base, &DELTA_GRID);
            for r in &log.rows {
                println!(
                    "{},{},{},{:e},{},{},{:e},{}",
                    r.example,
                    r.noise,
                    r.seed,
                    r.delta,
                    r.error.map(|e| format!("{e:.6e}")).unwrap_or_default(),
                    r.iterations,
                    r.final_objective,
                    r.status
                );
            }
            eprintln!(
                "{id} eps={noise}: best delta {:e} e={:.4e}",
                log.best_delta, log.best_error
            );
        }
    }
}
