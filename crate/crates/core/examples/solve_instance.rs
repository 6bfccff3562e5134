//! Solves one experiment-sized instance and prints the schedule.

use std::time::Instant;

use swipt_alloc::experiments::ExperimentConfig;
use swipt_alloc::problem::check_feasibility;
use swipt_alloc::solver::{solve, SolverOptions};

fn main() -> swipt_alloc::Result<()> {
    let config = ExperimentConfig {
        slots: 20,
        ..Default::default()
    };
    let instance = config.instance(10, 10.0, 46.0, 0)?;
    let start = Instant::now();
    let solution = solve(&instance, &SolverOptions::default())?;
    println!(
        "converged {} after {} iterations, residual {:.2e}, {:.2?}",
        solution.converged,
        solution.iterations,
        solution.residual_norm,
        start.elapsed()
    );
    println!("harvested {:.4} W (Ψ sum {:.4} W)", solution.harvested_power, solution.psi_objective);
    println!("slot  user  power (W)");
    for (n, (&k, &p)) in solution
        .schedule
        .id_user
        .iter()
        .zip(&solution.schedule.slot_power)
        .enumerate()
    {
        println!("{n:>4}  {k:>4}  {p:>9.4}");
    }
    println!(
        "average power {:.4} W of {:.4} W; user 0 rate {:.3} bit/s/Hz",
        solution.schedule.average_power(),
        instance.p_av,
        solution.schedule.average_rate(&instance, 0)
    );
    let violations = check_feasibility(&instance, &solution.schedule, 1e-9, 1e-9)?;
    println!("violations: {}", violations.len());
    Ok(())
}
