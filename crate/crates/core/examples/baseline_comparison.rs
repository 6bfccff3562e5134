//! Proposed allocation against the linear-model baseline on a few
//! realizations, both scored with the logistic model.

use swipt_alloc::baseline::{solve_linear_baseline, BaselineOptions};
use swipt_alloc::experiments::ExperimentConfig;
use swipt_alloc::solver::{solve, SolverOptions};
use swipt_alloc::units::linear_to_db;

fn main() -> swipt_alloc::Result<()> {
    let config = ExperimentConfig {
        slots: 30,
        ..Default::default()
    };
    println!("{:>3} {:>12} {:>12} {:>8}", "r", "proposed W", "baseline W", "gap dB");
    for r in 0..4 {
        let instance = config.instance(10, 10.0, 46.0, r)?;
        let proposed = solve(&instance, &SolverOptions::default())?;
        let baseline = solve_linear_baseline(&instance, &BaselineOptions::default())?;
        println!(
            "{r:>3} {:>12.4} {:>12.4} {:>8.2}",
            proposed.harvested_power,
            baseline.harvested_power,
            linear_to_db(proposed.harvested_power / baseline.harvested_power)
        );
    }

    // η only scales the baseline's objective, so the schedule stays put
    let instance = config.instance(10, 10.0, 46.0, 0)?;
    let schedules: Vec<_> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&eta| {
            solve_linear_baseline(&instance, &BaselineOptions { eta, ..Default::default() }).map(|s| s.schedule)
        })
        .collect::<swipt_alloc::Result<_>>()?;
    println!("baseline identical across eta: {}", schedules.windows(2).all(|w| w[0] == w[1]));
    Ok(())
}
