//! Outer loop of the sum-of-ratios method.
//!
//! Each term `Ψ_i = M / g_i` with `g_i = 1 + e^{-a(P_i^virtual h_i - b)}` is a
//! ratio. For parameters `ρ = (μ, β)` the inner problem maximizes
//! `Σ μ_i (M - β_i g_i)`; the optimum of the ratio sum is the point where
//! `φ(ρ) = 0`, with
//!
//! ```text
//! φ_i     = μ_i g_i - 1
//! φ_{N+i} = β_i g_i - M
//! ```
//!
//! `φ` is driven to zero by a damped Newton iteration whose Jacobian is
//! diagonal at fixed virtual powers. Terms are flattened slot-major,
//! `i = n K + k` with zero-based `n` and `k`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baseline::{solve_linear_baseline, BaselineOptions};
use crate::channel::capacity;
use crate::error::{Error, Result};
use crate::inner::{solve_inner, DualState, InnerOptions, InnerSolution, Utility};
use crate::problem::{AllocationSolution, ProblemInstance, Schedule, UserSlotMatrix};

/// The parameter vectors `μ` and `β`, one entry per flattened term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosParameters {
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SosParameters {
    /// Parameters for which `φ = 0` at the given virtual powers.
    pub fn fixed_point(instance: &ProblemInstance, virtual_power: &UserSlotMatrix) -> Self {
        let c = &instance.circuit;
        let (mu, beta) = instance
            .gains
            .as_slice()
            .iter()
            .zip(virtual_power.as_slice())
            .map(|(h, p)| {
                let g = c.denominator(p * h);
                (1.0 / g, c.max_dc_power() / g)
            })
            .unzip();
        SosParameters { mu, beta }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    fn step(&self, q: &[f64], zeta: f64) -> Self {
        let n = self.len();
        let floor = f64::MIN_POSITIVE;
        SosParameters {
            mu: (0..n).map(|i| (self.mu[i] + zeta * q[i]).max(floor)).collect(),
            beta: (0..n).map(|i| (self.beta[i] + zeta * q[n + i]).max(floor)).collect(),
        }
    }
}

/// Where the outer iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    /// Round-robin selection with uniform power, see [`init_parameters`].
    RoundRobin,
    /// The linear-model allocation.
    LinearBaseline,
    /// Prices searched on the `Ψ` sum itself, with a global scan of each
    /// slot's power. Lands in the basin of the best schedule far more often
    /// than the other two.
    Envelope,
}

/// Tuning for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Bound on `‖φ‖_∞` at convergence.
    pub outer_tolerance: f64,
    pub max_outer_iterations: usize,
    /// Sufficient-decrease constant of the line search.
    pub armijo_delta: f64,
    /// Backtracking factor of the line search.
    pub step_base: f64,
    /// Smallest step tried is `step_base^max_backtracks`.
    pub max_backtracks: u32,
    /// Each start runs the full iteration; the best converged run wins.
    pub starts: Vec<StartPoint>,
    /// Above this many `(k, n)` terms the starts are tried in order and the
    /// first converged run is returned.
    pub all_starts_up_to_terms: usize,
    /// Past iterates Anderson mixing may use when a full step contracts
    /// slowly; zero disables it.
    pub acceleration_memory: usize,
    /// When `K^T` is at most this, every selection pattern (with uniform
    /// power) is tried as an extra start.
    pub enumerate_selections_up_to: usize,
    pub inner: InnerOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            outer_tolerance: 1e-8,
            max_outer_iterations: 100,
            armijo_delta: 0.01,
            step_base: 0.5,
            max_backtracks: 2,
            starts: vec![StartPoint::Envelope, StartPoint::LinearBaseline, StartPoint::RoundRobin],
            all_starts_up_to_terms: 200,
            acceleration_memory: 5,
            enumerate_selections_up_to: 64,
            inner: InnerOptions::default(),
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.outer_tolerance > 0.0) {
            return Err(Error::Domain("outer tolerance must be positive".into()));
        }
        for (name, v) in [("armijo_delta", self.armijo_delta), ("step_base", self.step_base)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.starts.is_empty() {
            return Err(Error::Domain("at least one start point required".into()));
        }
        Ok(())
    }
}

fn check_shapes(rho: &SosParameters, virtual_power: &UserSlotMatrix, instance: &ProblemInstance) -> Result<()> {
    let n = instance.terms();
    if rho.mu.len() != n || rho.beta.len() != n {
        return Err(Error::Dimension(format!(
            "parameters of length {}/{} for {n} terms",
            rho.mu.len(),
            rho.beta.len()
        )));
    }
    if virtual_power.users() != instance.users() || virtual_power.slots() != instance.slots() {
        return Err(Error::Dimension("virtual power shape differs from the gain matrix".into()));
    }
    Ok(())
}

fn denominators(virtual_power: &UserSlotMatrix, instance: &ProblemInstance) -> Vec<f64> {
    instance
        .gains
        .as_slice()
        .iter()
        .zip(virtual_power.as_slice())
        .map(|(h, p)| instance.circuit.denominator(p * h))
        .collect()
}

/// `φ(ρ)` at the given virtual powers: `μ_i g_i - 1` then `β_i g_i - M`.
pub fn residuals(rho: &SosParameters, virtual_power: &UserSlotMatrix, instance: &ProblemInstance) -> Result<Vec<f64>> {
    check_shapes(rho, virtual_power, instance)?;
    let g = denominators(virtual_power, instance);
    let m = instance.circuit.max_dc_power();
    let mut out: Vec<f64> = rho.mu.iter().zip(&g).map(|(mu, g)| mu * g - 1.0).collect();
    out.extend(rho.beta.iter().zip(&g).map(|(b, g)| b * g - m));
    Ok(out)
}

/// Newton direction `q_i = -φ_i / g_i`; `ρ + q` is the fixed point at these
/// virtual powers.
pub fn newton_direction(
    rho: &SosParameters,
    virtual_power: &UserSlotMatrix,
    instance: &ProblemInstance,
) -> Result<Vec<f64>> {
    let phi = residuals(rho, virtual_power, instance)?;
    let g = denominators(virtual_power, instance);
    let n = g.len();
    Ok(phi.iter().enumerate().map(|(i, f)| -f / g[i % n]).collect())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Backtracking on `{1, base, base², …, base^max_backtracks}`: returns the
/// first step whose residual norm satisfies `‖φ(ζ)‖ <= (1 - δζ) ‖φ(0)‖`,
/// together with whatever `eval` produced for it.
pub fn line_search_by<T>(
    norm0: f64,
    delta: f64,
    base: f64,
    max_backtracks: u32,
    mut eval: impl FnMut(f64) -> Result<(f64, T)>,
) -> Result<(f64, T)> {
    let mut zeta = 1.0;
    for _ in 0..=max_backtracks {
        let (norm, payload) = eval(zeta)?;
        if norm <= (1.0 - delta * zeta) * norm0 {
            return Ok((zeta, payload));
        }
        zeta *= base;
    }
    Err(Error::Stagnation {
        floor: zeta / base,
        norm: norm0,
    })
}

/// Step length along `q` with the virtual powers held fixed.
pub fn line_search(
    rho: &SosParameters,
    q: &[f64],
    virtual_power: &UserSlotMatrix,
    instance: &ProblemInstance,
    delta: f64,
    step_base: f64,
) -> Result<f64> {
    let phi = residuals(rho, virtual_power, instance)?;
    let norm0 = norm2(&phi);
    if !(norm0 > 0.0) {
        return Err(Error::Domain("line search called at a fixed point".into()));
    }
    if q.len() != phi.len() {
        return Err(Error::Dimension("direction length differs from the residual".into()));
    }
    line_search_by(norm0, delta, step_base, 30, |zeta| {
        let trial = rho.step(q, zeta);
        Ok((norm2(&residuals(&trial, virtual_power, instance)?), ()))
    })
    .map(|(zeta, ())| zeta)
}

/// Round-robin selection (`n mod K`) with uniform power `min(P_av, P_max)`.
pub fn round_robin_schedule(instance: &ProblemInstance) -> Schedule {
    let k = instance.users();
    Schedule {
        id_user: (0..instance.slots()).map(|n| n % k).collect(),
        slot_power: vec![instance.p_av.min(instance.p_max); instance.slots()],
    }
}

/// Fixed-point parameters of the round-robin schedule.
pub fn init_parameters(instance: &ProblemInstance) -> Result<SosParameters> {
    instance.validate()?;
    let schedule = round_robin_schedule(instance);
    Ok(SosParameters::fixed_point(instance, &schedule.virtual_power(instance.users())))
}

/// Largest average rate `user` reaches alone: capped water-filling over all
/// slots with the full average-power budget.
pub fn max_average_rate(instance: &ProblemInstance, user: usize) -> f64 {
    let t = instance.slots();
    let budget = instance.p_av * t as f64;
    let gains: Vec<f64> = (0..t).map(|n| instance.gains.get(user, n)).collect();
    let alloc = |level: f64| -> (f64, f64) {
        gains.iter().fold((0.0, 0.0), |(power, rate), &h| {
            let p = (level - instance.sigma2 / h).clamp(0.0, instance.p_max);
            (power + p, rate + capacity(p, h, instance.sigma2))
        })
    };
    let mut hi = instance.p_max + gains.iter().map(|h| instance.sigma2 / h).fold(0.0, f64::max);
    if alloc(hi).0 <= budget {
        return alloc(hi).1 / t as f64;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).0 <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    alloc(lo).1 / t as f64
}

/// Rejects instances where some rate target is out of reach even with every
/// slot and the whole power budget.
pub fn check_rate_feasibility(instance: &ProblemInstance) -> Result<()> {
    for k in instance.rate_users() {
        let best = max_average_rate(instance, k);
        if best < instance.c_req[k] {
            return Err(Error::Infeasible {
                constraint: "rate target",
                detail: format!(
                    "user {k} reaches at most {best:.6} bit/s/Hz alone, below its target {}",
                    instance.c_req[k]
                ),
            });
        }
    }
    Ok(())
}

/// `Σ μ_i (M - β_i g_i)` for a schedule's virtual powers.
fn surrogate(instance: &ProblemInstance, rho: &SosParameters, virtual_power: &UserSlotMatrix) -> f64 {
    let m = instance.circuit.max_dc_power();
    denominators(virtual_power, instance)
        .iter()
        .enumerate()
        .map(|(i, g)| rho.mu[i] * (m - rho.beta[i] * g))
        .sum()
}

struct Iterate {
    rho: SosParameters,
    inner: InnerSolution,
    phi: Vec<f64>,
}

/// Solves the inner problem at `rho`, keeping `incumbent` when it scores
/// better on the parametric objective.
fn inner_step(
    instance: &ProblemInstance,
    rho: SosParameters,
    incumbent: Option<&InnerSolution>,
    options: &SolverOptions,
) -> Result<Iterate> {
    let warm = incumbent.map(|s| &s.duals);
    let fresh = solve_inner(
        instance,
        Utility::Fractional {
            mu: &rho.mu,
            beta: &rho.beta,
        },
        &options.inner,
        warm,
    )?;
    let inner = match incumbent {
        Some(old) => {
            let s_new = surrogate(instance, &rho, &fresh.virtual_power);
            let s_old = surrogate(instance, &rho, &old.virtual_power);
            if s_old > s_new + 1e-14 * s_old.abs().max(s_new.abs()) {
                old.clone()
            } else {
                fresh
            }
        }
        None => fresh,
    };
    let phi = residuals(&rho, &inner.virtual_power, instance)?;
    Ok(Iterate { rho, inner, phi })
}

fn seed_solution(instance: &ProblemInstance, schedule: Schedule) -> InnerSolution {
    InnerSolution {
        virtual_power: schedule.virtual_power(instance.users()),
        schedule,
        duals: DualState::zeros(instance.users()),
        utility: f64::NEG_INFINITY,
    }
}

/// Anderson mixing on the full-step map `ρ ↦ ρ + q(ρ)`, with `β` scaled by
/// `1/M` so both halves weigh alike.
struct Anderson {
    memory: usize,
    scale: f64,
    residuals: VecDeque<Vec<f64>>,
    images: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(memory: usize, max_dc_power: f64) -> Self {
        Anderson {
            memory,
            scale: max_dc_power,
            residuals: VecDeque::new(),
            images: VecDeque::new(),
        }
    }

    fn clear(&mut self) {
        self.residuals.clear();
        self.images.clear();
    }

    fn record(&mut self, rho: &SosParameters, q: &[f64]) {
        if self.memory == 0 {
            return;
        }
        let n = rho.len();
        let f: Vec<f64> = (0..2 * n)
            .map(|i| if i < n { q[i] } else { q[i] / self.scale })
            .collect();
        let image: Vec<f64> = (0..2 * n)
            .map(|i| if i < n { rho.mu[i] } else { rho.beta[i - n] / self.scale } + f[i])
            .collect();
        self.residuals.push_back(f);
        self.images.push_back(image);
        if self.residuals.len() > self.memory + 1 {
            self.residuals.pop_front();
            self.images.pop_front();
        }
    }

    /// Mixed proposal from the recorded history, if it allows one.
    fn mix(&self) -> Option<SosParameters> {
        let cols = self.residuals.len().checked_sub(1)?;
        if cols == 0 {
            return None;
        }
        let rows = self.residuals[0].len();
        let n = rows / 2;
        let d_res = DMatrix::from_fn(rows, cols, |i, j| self.residuals[j + 1][i] - self.residuals[j][i]);
        let d_img = DMatrix::from_fn(rows, cols, |i, j| self.images[j + 1][i] - self.images[j][i]);
        let last = DVector::from_column_slice(self.residuals.back()?);
        let weights = d_res.svd(true, true).solve(&last, 1e-12).ok()?;
        let mixed = DVector::from_column_slice(self.images.back()?) - d_img * weights;
        if mixed.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
        Some(SosParameters {
            mu: mixed.rows(0, n).iter().copied().collect(),
            beta: mixed.rows(n, n).iter().map(|b| b * self.scale).collect(),
        })
    }
}

/// Selection plus which slots sit at zero or peak power; the outer map is
/// smooth while this stays put. Idle slots carry no user, since any user
/// decoding at zero power gives the same virtual powers; powers within
/// rounding of zero count as idle.
fn active_pattern(instance: &ProblemInstance, schedule: &Schedule) -> Vec<Option<(usize, bool)>> {
    schedule
        .id_user
        .iter()
        .zip(&schedule.slot_power)
        .map(|(&id, &p)| (p > 1e-9 * instance.p_max).then_some((id, p >= instance.p_max)))
        .collect()
}

fn run_from(
    instance: &ProblemInstance,
    start: Schedule,
    options: &SolverOptions,
) -> Result<AllocationSolution> {
    // an infeasible seed only sets the first parameters
    let feasible = crate::problem::check_feasibility(instance, &start, 1e-9, 1e-9)?.is_empty();
    let seed = seed_solution(instance, start);
    let rho = SosParameters::fixed_point(instance, &seed.virtual_power);
    let mut it = inner_step(instance, rho, feasible.then_some(&seed), options)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut anderson = Anderson::new(options.acceleration_memory, instance.circuit.max_dc_power());
    let mut last_pattern = None;
    // after a stagnated search, backtracking is skipped until a step lands
    let mut stalled = false;
    loop {
        let residual = norm_inf(&it.phi);
        if residual <= options.outer_tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_outer_iterations {
            break;
        }
        iterations += 1;
        let q = newton_direction(&it.rho, &it.inner.virtual_power, instance)?;
        let norm0 = norm2(&it.phi);
        let pattern = active_pattern(instance, &it.inner.schedule);
        if last_pattern.as_ref() != Some(&pattern) {
            anderson.clear();
        }
        anderson.record(&it.rho, &q);
        last_pattern = Some(pattern);
        let mut full_step: Option<Iterate> = None;
        let searched = line_search_by(
            norm0,
            options.armijo_delta,
            options.step_base,
            if stalled { 0 } else { options.max_backtracks },
            |zeta| {
                let trial = inner_step(instance, it.rho.step(&q, zeta), Some(&it.inner), options)?;
                let norm = norm2(&trial.phi);
                if zeta == 1.0 {
                    full_step = Some(Iterate {
                        rho: trial.rho.clone(),
                        inner: trial.inner.clone(),
                        phi: trial.phi.clone(),
                    });
                }
                Ok((norm, trial))
            },
        );
        let mix = |next: Iterate| -> Result<Iterate> {
            let Some(mixed) = anderson.mix() else {
                return Ok(next);
            };
            let trial = inner_step(instance, mixed, Some(&it.inner), options)?;
            Ok(if norm2(&trial.phi) < norm2(&next.phi) { trial } else { next })
        };
        it = match searched {
            // a slowly contracting full step is where mixing pays off
            Ok((zeta, next)) if zeta == 1.0 && norm2(&next.phi) > 0.25 * norm0 => {
                stalled = false;
                mix(next)?
            }
            Ok((_, next)) => {
                stalled = false;
                next
            }
            // The full step is a minorize-maximize update and never lowers
            // the ratio sum, so it is a safe fallback. Runs of these drift
            // steadily, which extrapolation can shortcut.
            Err(Error::Stagnation { .. }) => {
                stalled = true;
                mix(full_step.expect("full step is tried first"))?
            }
            Err(e) => return Err(e),
        };
    }
    let mut solution = AllocationSolution::from_schedule(instance, it.inner.schedule)?;
    solution.iterations = iterations;
    solution.residual_norm = norm_inf(&it.phi);
    solution.converged = converged;
    solution.parameters = Some(it.rho);
    Ok(solution)
}

/// Maximizes the total harvested power (as the `Ψ` sum) subject to the
/// power and rate constraints.
pub fn solve(instance: &ProblemInstance, options: &SolverOptions) -> Result<AllocationSolution> {
    instance.validate()?;
    options.validate()?;
    check_rate_feasibility(instance)?;
    let (k, t) = (instance.users(), instance.slots());
    let patterns = (k as f64).powi(t as i32);
    let enumerated = if patterns <= options.enumerate_selections_up_to as f64 {
        patterns as usize
    } else {
        0
    };
    let exhaustive = instance.terms() <= options.all_starts_up_to_terms;
    let mut best: Option<AllocationSolution> = None;
    let mut first_error = None;
    for s in 0..options.starts.len() + enumerated {
        let seed = match options.starts.get(s) {
            Some(StartPoint::RoundRobin) => Ok(round_robin_schedule(instance)),
            Some(StartPoint::LinearBaseline) => {
                solve_linear_baseline(instance, &BaselineOptions::default()).map(|b| b.schedule)
            }
            Some(StartPoint::Envelope) => {
                // only a seed: the first outer step re-solves exactly
                let coarse = InnerOptions {
                    power_tol: options.inner.power_tol.max(1e-9),
                    ..options.inner.clone()
                };
                solve_inner(instance, Utility::Psi, &coarse, None).map(|e| e.schedule)
            }
            None => {
                let mut rest = s - options.starts.len();
                let id_user = (0..t)
                    .map(|_| {
                        let u = rest % k;
                        rest /= k;
                        u
                    })
                    .collect();
                Ok(Schedule {
                    id_user,
                    slot_power: vec![instance.p_av.min(instance.p_max); t],
                })
            }
        };
        let run = match seed.and_then(|schedule| run_from(instance, schedule, options)) {
            Ok(run) => run,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (run.converged && !b.converged)
                    || (run.converged == b.converged && run.psi_objective > b.psi_objective)
            }
        };
        if better {
            best = Some(run);
        }
        if !exhaustive && best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Err(first_error.expect("at least one start")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::EhCircuitParams;

    fn two_user() -> ProblemInstance {
        ProblemInstance::new(
            UserSlotMatrix::from_rows(&[vec![0.002], vec![0.001]]).unwrap(),
            1.0,
            1.0,
            vec![0.0, 0.0],
            1e-9,
            EhCircuitParams::reference(),
        )
        .unwrap()
    }

    /// One-term instance whose received power at `p` W equals `p * h`.
    fn single_term(h: f64) -> ProblemInstance {
        ProblemInstance::new(
            UserSlotMatrix::from_rows(&[vec![h], vec![1e-3]]).unwrap(),
            1.0,
            1.0,
            vec![0.0, 0.0],
            1e-9,
            EhCircuitParams::reference(),
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        // user 0 harvests at received power b, so g = 2
        let c = EhCircuitParams::reference();
        let inst = single_term(c.midpoint());
        let m = c.max_dc_power();
        let vp = Schedule {
            id_user: vec![1],
            slot_power: vec![1.0],
        }
        .virtual_power(2);
        let g1 = c.denominator(0.0);
        let rho = SosParameters {
            mu: vec![0.5, 1.0 / g1],
            beta: vec![m / 2.0, m / g1],
        };
        let phi = residuals(&rho, &vp, &inst).unwrap();
        assert!(phi.iter().all(|x| x.abs() < 1e-15), "{phi:?}");

        let rho = SosParameters {
            mu: vec![1.0, 1.0 / g1],
            beta: vec![m, m / g1],
        };
        let phi = residuals(&rho, &vp, &inst).unwrap();
        assert!((phi[0] - 1.0).abs() < 1e-15);
        assert!((phi[2] - m).abs() < 1e-15);
    }

    #[test]
    fn newton_examples() {
        let c = EhCircuitParams::reference();
        let inst = single_term(c.midpoint());
        let m = c.max_dc_power();
        let vp = Schedule {
            id_user: vec![1],
            slot_power: vec![1.0],
        }
        .virtual_power(2);
        let g1 = c.denominator(0.0);
        let rho = SosParameters {
            mu: vec![1.0, 1.0 / g1],
            beta: vec![2.0 * m, m / g1],
        };
        let q = newton_direction(&rho, &vp, &inst).unwrap();
        assert!((q[0] + 0.5).abs() < 1e-15);
        assert!((q[2] + 1.5 * m).abs() < 1e-15);
        assert!(q[1].abs() < 1e-15 && q[3].abs() < 1e-15);
        let at_fixed = SosParameters::fixed_point(&inst, &vp);
        let q = newton_direction(&at_fixed, &vp, &inst).unwrap();
        assert!(q.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn full_step_at_fixed_powers() {
        let inst = two_user();
        let vp = round_robin_schedule(&inst).virtual_power(2);
        let rho = SosParameters {
            mu: vec![0.9, 0.3],
            beta: vec![0.01, 0.004],
        };
        let q = newton_direction(&rho, &vp, &inst).unwrap();
        let zeta = line_search(&rho, &q, &vp, &inst, 0.01, 0.5).unwrap();
        assert_eq!(zeta, 1.0);
        let at_fixed = SosParameters::fixed_point(&inst, &vp);
        assert!(line_search(&at_fixed, &q, &vp, &inst, 0.01, 0.5).is_err());
    }

    #[test]
    fn line_search_reports_stagnation() {
        let err = line_search_by(1.0, 0.01, 0.5, 30, |_| Ok((2.0, ()))).unwrap_err();
        assert!(matches!(err, Error::Stagnation { .. }));
        let (zeta, ()) = line_search_by(1.0, 0.01, 0.5, 30, |z| Ok((if z < 0.2 { 0.5 } else { 1.5 }, ()))).unwrap();
        assert_eq!(zeta, 0.125);
    }

    #[test]
    fn init_ranges() {
        let inst = two_user();
        let rho = init_parameters(&inst).unwrap();
        let m = inst.circuit.max_dc_power();
        assert!(rho.mu.iter().all(|&x| x > 0.0 && x <= 1.0));
        assert!(rho.beta.iter().all(|&x| x > 0.0 && x <= m));
        let vp = round_robin_schedule(&inst).virtual_power(2);
        assert!(residuals(&rho, &vp, &inst).unwrap().iter().all(|x| x.abs() < 1e-15));

        let tiny = ProblemInstance { p_av: 1e-300, ..two_user() };
        let rho = init_parameters(&tiny).unwrap();
        let omega = inst.circuit.omega();
        for (&mu, &beta) in rho.mu.iter().zip(&rho.beta) {
            assert!((mu / omega - 1.0).abs() < 1e-12);
            assert!((beta / (m * omega) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_user_example() {
        let inst = two_user();
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.schedule.id_user, vec![1]);
        assert_eq!(sol.schedule.slot_power, vec![1.0]);
        assert!((sol.psi_objective - 9.222e-3).abs() < 1e-5, "{}", sol.psi_objective);
        assert!((sol.harvested_power - 8.09e-3).abs() < 1e-5, "{}", sol.harvested_power);
        let beta_sum: f64 = sol.parameters.as_ref().unwrap().beta.iter().sum();
        assert!((beta_sum - sol.psi_objective).abs() <= 1e-6 * sol.psi_objective);
    }

    #[test]
    fn single_user_has_no_harvester() {
        let inst = ProblemInstance::new(
            UserSlotMatrix::from_rows(&[vec![0.002]]).unwrap(),
            1.0,
            1.0,
            vec![0.0],
            1e-9,
            EhCircuitParams::reference(),
        )
        .unwrap();
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(sol.schedule.slot_power, vec![0.0]);
        assert_eq!(sol.harvested_power, 0.0);
    }

    #[test]
    fn presolve_names_rate_constraint() {
        let inst = ProblemInstance::new(
            UserSlotMatrix::from_rows(&[vec![1e-6, 1e-6], vec![1e-3, 1e-3]]).unwrap(),
            0.5,
            1.0,
            vec![40.0, 0.0],
            1e-3,
            EhCircuitParams::reference(),
        )
        .unwrap();
        let err = solve(&inst, &SolverOptions::default()).unwrap_err();
        assert!(err.to_string().contains("rate target"), "{err}");
    }

    #[test]
    fn max_rate_uses_whole_budget() {
        let inst = ProblemInstance::new(
            UserSlotMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            1.0,
            5.0,
            vec![0.0],
            1.0,
            EhCircuitParams::reference(),
        )
        .unwrap();
        // two equal slots with one watt each: log2(2) per slot
        assert!((max_average_rate(&inst, 0) - 1.0).abs() < 1e-9);
    }
}
