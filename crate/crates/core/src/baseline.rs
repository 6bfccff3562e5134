//! Allocation designed for the linear harvesting model `η P_RF`.
//!
//! The schedule is chosen to maximize `Σ (1 - s_k(n)) η P(n) h_k(n)` under the
//! same constraints as the proposed scheme, then scored with the logistic
//! model like any other allocation.

use crate::error::{domain, Result};
use crate::inner::{solve_inner, solve_inner_for_selection, InnerOptions, Utility};
use crate::problem::{AllocationSolution, ProblemInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    /// Linear conversion efficiency; only scales the design objective.
    pub eta: f64,
    /// When `K^T` is at most this, every selection is solved exactly and
    /// the best kept; the price search alone can miss it on tiny
    /// instances with an active rate target.
    pub enumerate_selections_up_to: usize,
    pub inner: InnerOptions,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            eta: 0.5,
            enumerate_selections_up_to: 64,
            inner: InnerOptions::default(),
        }
    }
}

pub fn solve_linear_baseline(instance: &ProblemInstance, options: &BaselineOptions) -> Result<AllocationSolution> {
    if !(options.eta > 0.0 && options.eta <= 1.0) {
        return Err(domain(format!("eta must lie in (0, 1], got {}", options.eta)));
    }
    crate::solver::check_rate_feasibility(instance)?;
    // η only scales the objective, so the schedule is computed at η = 1 and
    // comes out bit-identical for every η
    let utility = Utility::Linear { eta: 1.0 };
    let mut best = solve_inner(instance, utility, &options.inner, None)?;
    let (k, t) = (instance.users(), instance.slots());
    if (k as f64).powi(t as i32) <= options.enumerate_selections_up_to as f64 {
        for code in 0..k.pow(t as u32) {
            let selection = (0..t).map(|n| code / k.pow(n as u32) % k).collect();
            // selections the repair cannot rescue are skipped
            if let Ok(s) = solve_inner_for_selection(instance, utility, selection, &options.inner) {
                if s.utility > best.utility {
                    best = s;
                }
            }
        }
    }
    AllocationSolution::from_schedule(instance, best.schedule)
}

/// Linear-model harvested power of an allocation, `η Σ P_virtual h`.
pub fn linear_score(instance: &ProblemInstance, solution: &AllocationSolution, eta: f64) -> f64 {
    eta * solution
        .virtual_power
        .as_slice()
        .iter()
        .zip(instance.gains.as_slice())
        .map(|(p, h)| p * h)
        .sum::<f64>()
}
