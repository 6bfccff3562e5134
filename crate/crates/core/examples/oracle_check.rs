//! Compares the solver with exhaustive search on a tiny instance. The
//! oracle grid is capped by its enumeration budget of `K^T · G^T <= 1e7`.

use swipt_alloc::channel::{generate_realization, ChannelConfig};
use swipt_alloc::eh_model::EhCircuitParams;
use swipt_alloc::oracle::brute_force_oracle;
use swipt_alloc::solver::{solve, SolverOptions};
use swipt_alloc::ProblemInstance;

fn main() -> swipt_alloc::Result<()> {
    let realization = generate_realization(&ChannelConfig::default(), 3, 3, &[12.0, 18.0, 25.0], 5)?;
    let instance = ProblemInstance::new(
        realization.gains,
        8.0,
        20.0,
        vec![0.5, 0.0, 0.0],
        1e-3,
        EhCircuitParams::reference(),
    )?;
    let solution = solve(&instance, &SolverOptions::default())?;
    let oracle = brute_force_oracle(&instance, 71)?;
    println!("solver  Ψ = {:.6e}  users {:?}  powers {:.3?}", solution.psi_objective, solution.schedule.id_user, solution.schedule.slot_power);
    println!("oracle  Ψ = {:.6e}  users {:?}  powers {:.3?}", oracle.objective, oracle.solution.schedule.id_user, oracle.solution.schedule.slot_power);
    println!("grid bound {:.3e}, oracle minus solver {:.3e}", oracle.lipschitz_bound, oracle.objective - solution.psi_objective);
    if let Some(gap) = oracle.runner_up_gap() {
        println!("runner-up selection trails by {gap:.3e}");
    }
    Ok(())
}
