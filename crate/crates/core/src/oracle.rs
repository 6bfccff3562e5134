//! Exhaustive search over selections and a uniform power grid, for checking
//! the solver on tiny instances.

use crate::channel::capacity;
use crate::eh_model::psi_unchecked;
use crate::error::{domain, Error, Result};
use crate::problem::{AllocationSolution, ProblemInstance, Schedule};

/// Largest `K^T · G^T` the oracle will enumerate.
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// What the oracle maximizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleObjective {
    /// Sum of `Ψ` over all harvesting terms.
    Psi,
    /// Linear-model harvested power `η Σ P_virtual h`.
    Linear { eta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub solution: AllocationSolution,
    /// Objective value of the best grid point under the chosen objective.
    pub objective: f64,
    /// Bound on how far the grid optimum can sit below the true optimum.
    pub lipschitz_bound: f64,
    /// Best objective per selection (slot-ordered user indices), best first.
    /// Selections with no feasible grid point are omitted.
    pub per_selection: Vec<(Vec<usize>, f64)>,
}

impl OracleReport {
    /// Gap between the best and second-best selection, if there are two.
    pub fn runner_up_gap(&self) -> Option<f64> {
        match self.per_selection.as_slice() {
            [a, b, ..] => Some(a.1 - b.1),
            _ => None,
        }
    }
}

/// Enumerates `Ψ`-optimal schedules on a `grid_points` power grid.
pub fn brute_force_oracle(instance: &ProblemInstance, grid_points: usize) -> Result<OracleReport> {
    brute_force_oracle_with(instance, grid_points, OracleObjective::Psi)
}

pub fn brute_force_oracle_with(
    instance: &ProblemInstance,
    grid_points: usize,
    objective: OracleObjective,
) -> Result<OracleReport> {
    instance.validate()?;
    if grid_points < 2 {
        return Err(domain("power grid needs at least two points"));
    }
    let k = instance.users();
    let t = instance.slots();
    let needed = (k as f64).powi(t as i32) * (grid_points as f64).powi(t as i32);
    if needed > ENUMERATION_BUDGET {
        return Err(Error::Budget {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    let pitch = instance.p_max / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|g| g as f64 * pitch).collect();
    let c = &instance.circuit;

    // value[n][k][g]: slot objective with user k decoding at grid power g
    let mut value = vec![vec![vec![0.0; grid_points]; k]; t];
    let mut rate = vec![vec![vec![0.0; grid_points]; k]; t];
    for n in 0..t {
        let h = instance.gains.slot(n);
        for id in 0..k {
            for (g, &p) in grid.iter().enumerate() {
                value[n][id][g] = match objective {
                    OracleObjective::Psi => (0..k)
                        .map(|j| psi_unchecked(c, if j == id { 0.0 } else { p * h[j] }))
                        .sum(),
                    OracleObjective::Linear { eta } => {
                        eta * p * (h.iter().sum::<f64>() - h[id])
                    }
                };
                rate[n][id][g] = capacity(p, h[id], instance.sigma2);
            }
        }
    }
    let lipschitz = match objective {
        OracleObjective::Psi => {
            let slope = c.steepness() * c.max_dc_power() / 4.0;
            (0..k)
                .map(|j| (0..t).map(|n| slope * instance.gains.get(j, n)).fold(0.0, f64::max))
                .sum::<f64>()
        }
        OracleObjective::Linear { eta } => (0..k)
            .map(|j| (0..t).map(|n| eta * instance.gains.get(j, n)).fold(0.0, f64::max))
            .sum::<f64>(),
    };
    let budget = instance.p_av * t as f64 * (1.0 + 1e-12);
    let targets: Vec<f64> = instance.c_req.iter().map(|r| r * t as f64 * (1.0 - 1e-12)).collect();

    let mut per_selection = Vec::new();
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut selection = vec![0usize; t];
    let total_selections = k.pow(t as u32);
    for code in 0..total_selections {
        let mut c2 = code;
        for slot in selection.iter_mut() {
            *slot = c2 % k;
            c2 /= k;
        }
        let mut search = Dfs {
            grid: &grid,
            value: &value,
            rate: &rate,
            selection: &selection,
            budget,
            targets: &targets,
            powers: vec![0; t],
            best: None,
        };
        search.run(0, 0.0, 0.0, &mut vec![0.0; k]);
        if let Some((v, powers)) = search.best {
            per_selection.push((selection.clone(), v));
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, selection.clone(), powers));
            }
        }
    }
    let (objective_value, id_user, powers) = best.ok_or(Error::Infeasible {
        constraint: "rate target",
        detail: "no grid point meets every rate target within the power budget".into(),
    })?;
    per_selection.sort_by(|a, b| b.1.total_cmp(&a.1));
    let schedule = Schedule {
        id_user,
        slot_power: powers.iter().map(|&g| grid[g]).collect(),
    };
    Ok(OracleReport {
        solution: AllocationSolution::from_schedule(instance, schedule)?,
        objective: objective_value,
        lipschitz_bound: lipschitz * pitch * t as f64,
        per_selection,
    })
}

struct Dfs<'a> {
    grid: &'a [f64],
    value: &'a [Vec<Vec<f64>>],
    rate: &'a [Vec<Vec<f64>>],
    selection: &'a [usize],
    budget: f64,
    targets: &'a [f64],
    powers: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Dfs<'_> {
    fn run(&mut self, n: usize, power: f64, acc: f64, rates: &mut [f64]) {
        if n == self.selection.len() {
            if rates.iter().zip(self.targets).all(|(r, t)| r >= t)
                && self.best.as_ref().is_none_or(|b| acc > b.0)
            {
                self.best = Some((acc, self.powers.clone()));
            }
            return;
        }
        let id = self.selection[n];
        for (g, &p) in self.grid.iter().enumerate() {
            // grid powers increase, so the first budget miss ends the loop
            if power + p > self.budget {
                break;
            }
            self.powers[n] = g;
            rates[id] += self.rate[n][id][g];
            self.run(n + 1, power + p, acc + self.value[n][id][g], rates);
            rates[id] -= self.rate[n][id][g];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::EhCircuitParams;
    use crate::problem::UserSlotMatrix;

    fn instance(rows: &[Vec<f64>], p_av: f64, p_max: f64, c_req: Vec<f64>) -> ProblemInstance {
        ProblemInstance::new(
            UserSlotMatrix::from_rows(rows).unwrap(),
            p_av,
            p_max,
            c_req,
            1e-9,
            EhCircuitParams::reference(),
        )
        .unwrap()
    }

    #[test]
    fn two_user_reference() {
        let inst = instance(&[vec![0.002], vec![0.001]], 1.0, 1.0, vec![0.0, 0.0]);
        let report = brute_force_oracle(&inst, 10_000).unwrap();
        assert_eq!(report.solution.schedule.id_user, vec![1]);
        assert_eq!(report.solution.schedule.slot_power, vec![1.0]);
        assert!((report.objective - 9.222e-3).abs() < 1e-5);
        assert!((report.solution.harvested_power - 8.09e-3).abs() < 1e-5);
        assert_eq!(report.per_selection.len(), 2);
        assert!(report.runner_up_gap().unwrap() > 0.0);
    }

    #[test]
    fn zero_budget_means_zero_power() {
        let inst = instance(&[vec![0.002, 0.001], vec![0.001, 0.003]], 0.0, 1.0, vec![0.0, 0.0]);
        let report = brute_force_oracle(&inst, 50).unwrap();
        assert!(report.solution.schedule.slot_power.iter().all(|&p| p == 0.0));
        assert_eq!(report.solution.harvested_power, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let inst = instance(&vec![vec![0.002; 3]; 3], 0.5, 1.0, vec![0.0; 3]);
        assert!(matches!(brute_force_oracle(&inst, 1000), Err(Error::Budget { .. })));
        assert!(brute_force_oracle(&inst, 1).is_err());
    }

    #[test]
    fn respects_average_power() {
        let inst = instance(&[vec![0.002, 0.002], vec![0.001, 0.001]], 0.5, 1.0, vec![0.0, 0.0]);
        let report = brute_force_oracle(&inst, 101).unwrap();
        assert!(report.solution.schedule.average_power() <= 0.5 + 1e-12);
    }

    #[test]
    fn lipschitz_bound_matches_definition() {
        let inst = instance(&[vec![0.002, 0.001], vec![0.001, 0.003]], 0.5, 2.0, vec![0.0, 0.0]);
        let report = brute_force_oracle(&inst, 21).unwrap();
        let slope = 1500.0 * 0.020 / 4.0;
        let expected = slope * (0.002 + 0.003) * (2.0 / 20.0) * 2.0;
        assert!((report.lipschitz_bound - expected).abs() < 1e-15);
    }
}
