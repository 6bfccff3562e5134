//! A small distance sweep. The full-size run is `swipt-alloc run --sweep distance`.

use swipt_alloc::experiments::{run_distance_sweep, ExperimentConfig};

fn main() -> swipt_alloc::Result<()> {
    let config = ExperimentConfig {
        realizations: 3,
        slots: 30,
        users: vec![5, 10],
        ..Default::default()
    };
    for r in run_distance_sweep(&config)? {
        println!(
            "{:<9} K={:<3} d={:>4} m  {:>8.4} W ± {:.4}",
            r.scheme.as_str(),
            r.users,
            r.value,
            r.mean_harvested_w,
            r.stderr_w
        );
    }
    Ok(())
}
