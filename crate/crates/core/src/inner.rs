//! Inner problem at fixed outer parameters: one information-decoding user per
//! slot and one transmit power per slot, coordinated by two kinds of prices.
//!
//! For a fixed selection the per-slot utility is concave in the slot power,
//! so the problem splits into one-dimensional maximizations once the average
//! power constraint (price `γ`) and the per-user rate constraints (prices
//! `ε(k)`) are dualized. The solve runs in two phases:
//!
//! 1. *Selection.* Search `(γ, ε)` with the full per-slot argmax over users
//!    and read off the scheduled user in every slot.
//! 2. *Power.* Freeze the selection and solve the remaining convex power
//!    allocation exactly: `ε(k)` per rate-constrained user by bisection on its
//!    rate, `γ` by bisection on the power budget, then interpolate between
//!    the two bracketing allocations so the budget binds exactly. If the
//!    frozen selection cannot meet a rate target, slots are reassigned to
//!    that user in order of decreasing channel gain.
//!
//! Virtual powers follow directly from the schedule, `(1 - s_k(n)) P(n)`,
//! so the Big-M constraints hold by construction.

use std::f64::consts::LN_2;

use crate::channel::capacity;
use crate::eh_model::{logistic, psi_unchecked};
use crate::error::{domain, Error, Result};
use crate::problem::{ProblemInstance, Schedule, UserSlotMatrix};
use crate::roots::{bisect_decreasing, bracket_from, decreasing_root};

/// Lagrange multipliers of the coupling constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Price of the average-power constraint.
    pub gamma: f64,
    /// Price of each user's average-rate constraint.
    pub rate_multipliers: Vec<f64>,
}

impl DualState {
    pub fn zeros(users: usize) -> Self {
        DualState {
            gamma: 0.0,
            rate_multipliers: vec![0.0; users],
        }
    }
}

/// Scheduled user and power for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDecision {
    pub slot: usize,
    pub id_user: usize,
    pub power: f64,
    /// Lagrangian value of the slot at the decision.
    pub value: f64,
}

/// Harvesting utility of the non-decoding users in a slot.
#[derive(Debug, Clone, Copy)]
pub enum Utility<'a> {
    /// `Σ_j μ_j (M - β_j (1 + e^{-a(P_virtual h_j - b)}))` with `μ`, `β`
    /// flattened slot-major.
    Fractional { mu: &'a [f64], beta: &'a [f64] },
    /// `η P Σ_{j≠k} h_j`, the linear harvesting model.
    Linear { eta: f64 },
    /// `Σ_{j≠k} Ψ(P h_j)` directly. Not concave in `P`; slot powers come
    /// from a grid scan refined by golden-section search.
    Psi,
}

/// Tuning for [`solve_inner`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOptions {
    /// Relative bracket width for `γ` during selection.
    pub selection_gamma_tol: f64,
    /// Relative bracket width for `ε(k)` during selection.
    pub selection_rate_tol: f64,
    /// Relative bracket width for `γ` while `ε` is being searched; only the
    /// final prices need `selection_gamma_tol`.
    pub rate_search_gamma_tol: f64,
    /// Relative bracket width for the exact power phase.
    pub power_tol: f64,
    /// Cap on Lagrangian evaluations per solve.
    pub max_evaluations: usize,
    /// Coordinate sweeps over rate-constrained users during selection.
    pub max_rate_sweeps: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            selection_gamma_tol: 1e-9,
            selection_rate_tol: 1e-4,
            rate_search_gamma_tol: 1e-5,
            power_tol: 1e-13,
            max_evaluations: 200_000,
            max_rate_sweeps: 20,
        }
    }
}

/// Output of [`solve_inner`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub schedule: Schedule,
    pub virtual_power: UserSlotMatrix,
    pub duals: DualState,
    /// Utility (without price terms) of the schedule.
    pub utility: f64,
}

/// Closed-form rate-driven power `[ε/(ln2 · price) - σ²/h]⁺`.
pub fn waterfilling_power(rate_multiplier: f64, price: f64, gain: f64, sigma2: f64) -> Result<f64> {
    if !(price > 0.0) {
        return Err(domain(format!("water-filling price must be positive, got {price}")));
    }
    Ok((rate_multiplier / (LN_2 * price) - sigma2 / gain).max(0.0))
}

/// Per-slot Lagrangian for a fixed utility.
pub(crate) struct SlotLagrangian<'a> {
    instance: &'a ProblemInstance,
    utility: Utility<'a>,
    /// `μ_j β_j` per flat index (fractional utility only).
    weights: Vec<f64>,
    /// `Σ_j μ_j (M - β_j)` per slot (fractional utility only).
    base: Vec<f64>,
    /// `e^{ab}`
    idle_exp: f64,
    slots_f: f64,
    /// Per-slot power grid and `Ψ(p_g h_j)` table, grid-major (`Psi` only).
    grids: Vec<Vec<f64>>,
    tables: Vec<Vec<f64>>,
    /// Row sums of `tables` plus `Ψ(0)`, per grid point.
    row_sums: Vec<Vec<f64>>,
    /// Capacity at each grid point for each decoding user, grid-major.
    rates: Vec<Vec<f64>>,
    /// Bound on the `Ψ`-sum slope over each grid interval.
    interval_slopes: Vec<Vec<f64>>,
}

impl<'a> SlotLagrangian<'a> {
    pub(crate) fn new(instance: &'a ProblemInstance, utility: Utility<'a>) -> Result<Self> {
        let n_terms = instance.terms();
        let circuit = &instance.circuit;
        let (weights, base) = match utility {
            Utility::Fractional { mu, beta } => {
                if mu.len() != n_terms || beta.len() != n_terms {
                    return Err(Error::Dimension(format!(
                        "parameter vectors of length {}/{} for {n_terms} terms",
                        mu.len(),
                        beta.len()
                    )));
                }
                let weights: Vec<f64> = mu.iter().zip(beta).map(|(m, b)| m * b).collect();
                let k = instance.users();
                let base = (0..instance.slots())
                    .map(|n| {
                        (n * k..(n + 1) * k)
                            .map(|i| mu[i] * (circuit.max_dc_power() - beta[i]))
                            .sum()
                    })
                    .collect();
                (weights, base)
            }
            Utility::Linear { eta } => {
                if !(eta > 0.0 && eta <= 1.0) {
                    return Err(domain(format!("linear efficiency must lie in (0, 1], got {eta}")));
                }
                (Vec::new(), Vec::new())
            }
            Utility::Psi => (Vec::new(), Vec::new()),
        };
        let (grids, tables): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match utility {
            Utility::Psi => (0..instance.slots()).map(|n| psi_grid(instance, n)).unzip(),
            _ => (Vec::new(), Vec::new()),
        };
        let k = instance.users();
        let psi_idle = psi_unchecked(circuit, 0.0);
        let row_sums = tables
            .iter()
            .map(|t| t.chunks(k).map(|row| row.iter().sum::<f64>() + psi_idle).collect())
            .collect();
        let rates = grids
            .iter()
            .enumerate()
            .map(|(n, grid)| {
                let gains = instance.gains.slot(n);
                grid.iter()
                    .flat_map(|&p| gains.iter().map(move |&h| capacity(p, h, instance.sigma2)))
                    .collect()
            })
            .collect();
        let interval_slopes = grids
            .iter()
            .enumerate()
            .map(|(n, grid)| interval_slopes(instance, n, grid))
            .collect();
        Ok(SlotLagrangian {
            interval_slopes,
            instance,
            utility,
            weights,
            base,
            idle_exp: (circuit.steepness() * circuit.midpoint()).exp(),
            slots_f: instance.slots() as f64,
            grids,
            tables,
            row_sums,
            rates,
        })
    }

    fn a(&self) -> f64 {
        self.instance.circuit.steepness()
    }

    fn b(&self) -> f64 {
        self.instance.circuit.midpoint()
    }

    /// `e^{-a(p h - b)}`
    fn eh_exp(&self, p: f64, h: f64) -> f64 {
        (-self.a() * (p * h - self.b())).exp()
    }

    /// Utility of slot `n` when `k` decodes and the slot transmits `p`.
    pub(crate) fn utility(&self, n: usize, k: usize, p: f64) -> f64 {
        let gains = self.instance.gains.slot(n);
        match self.utility {
            Utility::Fractional { .. } => {
                let users = gains.len();
                let w = &self.weights[n * users..(n + 1) * users];
                let mut v = self.base[n] - w[k] * self.idle_exp;
                for (j, (&wj, &hj)) in w.iter().zip(gains).enumerate() {
                    if j != k {
                        v -= wj * self.eh_exp(p, hj);
                    }
                }
                v
            }
            Utility::Linear { eta } => {
                let others: f64 = gains.iter().sum::<f64>() - gains[k];
                eta * p * others
            }
            Utility::Psi => {
                let c = &self.instance.circuit;
                gains
                    .iter()
                    .enumerate()
                    .map(|(j, &h)| psi_unchecked(c, if j == k { 0.0 } else { p * h }))
                    .sum()
            }
        }
    }

    /// Full Lagrangian term for `(n, k, p)`.
    fn value(&self, n: usize, k: usize, p: f64, gamma: f64, eps: f64) -> f64 {
        let h = self.instance.gains.get(k, n);
        let mut v = self.utility(n, k, p) - gamma * p / self.slots_f;
        if eps > 0.0 {
            v += eps * capacity(p, h, self.instance.sigma2) / self.slots_f;
        }
        v
    }

    /// Power maximizing the slot Lagrangian for decoding user `k`.
    fn best_power(&self, n: usize, k: usize, gamma: f64, eps: f64) -> f64 {
        let inst = self.instance;
        let p_max = inst.p_max;
        let gains = inst.gains.slot(n);
        let h_k = gains[k];
        let t = self.slots_f;
        match self.utility {
            Utility::Linear { eta } => {
                let slope = eta * (gains.iter().sum::<f64>() - h_k);
                let price = gamma - t * slope;
                if eps > 0.0 {
                    if price <= 0.0 {
                        p_max
                    } else {
                        waterfilling_power(eps, price, h_k, inst.sigma2)
                            .expect("positive price")
                            .min(p_max)
                    }
                } else if price < 0.0 {
                    p_max
                } else {
                    0.0
                }
            }
            Utility::Psi if gains.len() > 1 => {
                let (g, _) = self.grid_argmax(n, k, gamma, eps);
                self.refine(n, k, g, gamma, eps)
            }
            Utility::Fractional { .. } | Utility::Psi => {
                let users = gains.len();
                if users == 1 {
                    // no harvesting users: pure water-filling on the rate term
                    return if eps <= 0.0 {
                        0.0
                    } else if gamma <= 0.0 {
                        p_max
                    } else {
                        waterfilling_power(eps, gamma, h_k, inst.sigma2)
                            .expect("positive price")
                            .min(p_max)
                    };
                }
                let w = &self.weights[n * users..(n + 1) * users];
                let a = self.a();
                let sigma2 = inst.sigma2;
                let rate_coef = eps / (t * LN_2);
                let slope = |p: f64| -> (f64, f64) {
                    let mut d = -gamma / t;
                    let mut dd = 0.0;
                    for (j, (&wj, &hj)) in w.iter().zip(gains).enumerate() {
                        if j != k && wj > 0.0 {
                            let term = wj * a * hj * self.eh_exp(p, hj);
                            d += term;
                            dd -= term * a * hj;
                        }
                    }
                    if rate_coef > 0.0 {
                        let snr_den = sigma2 + p * h_k;
                        d += rate_coef * h_k / snr_den;
                        dd -= rate_coef * h_k * h_k / (snr_den * snr_den);
                    }
                    (d, dd)
                };
                if slope(0.0).0 <= 0.0 {
                    return 0.0;
                }
                if slope(p_max).0 >= 0.0 {
                    return p_max;
                }
                decreasing_root(slope, 0.0, p_max, 0.0, 1e-14)
            }
        }
    }

    /// Lagrangian at grid point `g` of slot `n` from the precomputed tables.
    fn grid_value(&self, n: usize, k: usize, g: usize, gamma: f64, eps: f64) -> f64 {
        let users = self.instance.users();
        let i = g * users + k;
        let mut v = self.row_sums[n][g] - self.tables[n][i] - gamma * self.grids[n][g] / self.slots_f;
        if eps > 0.0 {
            v += eps * self.rates[n][i] / self.slots_f;
        }
        v
    }

    /// Best grid index for decoding user `k`; ties go to the lower power.
    fn grid_argmax(&self, n: usize, k: usize, gamma: f64, eps: f64) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for g in 0..self.grids[n].len() {
            let v = self.grid_value(n, k, g, gamma, eps);
            if v > best.1 {
                best = (g, v);
            }
        }
        best
    }

    /// Whether every `Ψ` term is convex up to the grid point after `g`, so
    /// without a rate term the slot Lagrangian peaks on the grid there.
    fn convex_around(&self, n: usize, g: usize, eps: f64) -> bool {
        let grid = &self.grids[n];
        let p_r = grid[(g + 1).min(grid.len() - 1)];
        let h_max = self.instance.gains.slot(n).iter().copied().fold(0.0, f64::max);
        eps <= 0.0 && p_r * h_max <= self.b()
    }

    /// Golden-section refinement around grid point `g`.
    fn refine(&self, n: usize, k: usize, g: usize, gamma: f64, eps: f64) -> f64 {
        let grid = &self.grids[n];
        if self.convex_around(n, g, eps) {
            return grid[g];
        }
        let lo = if g == 0 { grid[0] } else { grid[g - 1] };
        let hi = if g + 1 == grid.len() { grid[g] } else { grid[g + 1] };
        let p = golden_max(|p| self.value(n, k, p, gamma, eps), lo, hi);
        if self.value(n, k, p, gamma, eps) >= self.value(n, k, grid[g], gamma, eps) {
            p
        } else {
            grid[g]
        }
    }

    /// Grid argmax for user `k` plus an upper bound on what [`Self::refine`]
    /// can reach from it, from one-sided slope limits on the two
    /// neighbouring intervals.
    fn grid_bound(&self, n: usize, k: usize, gamma: f64, eps: f64) -> (usize, f64, f64) {
        let grid = &self.grids[n];
        let (g, v) = self.grid_argmax(n, k, gamma, eps);
        if self.convex_around(n, g, eps) {
            return (g, v, v);
        }
        let t = self.slots_f;
        let h_k = self.instance.gains.get(k, n);
        let fall = gamma / t;
        let mut upper = v;
        for i in [g.checked_sub(1), Some(g)].into_iter().flatten() {
            if i + 1 >= grid.len() {
                continue;
            }
            let (v_l, v_r) = (self.grid_value(n, k, i, gamma, eps), self.grid_value(n, k, i + 1, gamma, eps));
            let d = grid[i + 1] - grid[i];
            let mut rise = self.interval_slopes[n][i];
            if eps > 0.0 {
                rise += eps * h_k / (t * LN_2 * (self.instance.sigma2 + grid[i] * h_k));
            }
            let rise = (rise - fall).max(0.0);
            if rise + fall > 0.0 {
                let x = ((v_r - v_l + fall * d) / (rise + fall)).clamp(0.0, d);
                upper = upper.max((v_l + rise * x).min(v_r + fall * (d - x)));
            }
        }
        (g, v, upper)
    }

    /// Best `(k, p)` for slot `n` at the given prices; ties go to the lowest
    /// user index.
    pub(crate) fn best(&self, n: usize, gamma: f64, eps: &[f64]) -> SlotDecision {
        let users = self.instance.users();
        // only candidates whose refinement could reach the leader's are
        // refined
        let candidates: Vec<(usize, Option<usize>)> = match self.utility {
            Utility::Fractional { .. } if users > 2 => {
                self.screen(n, gamma, eps).into_iter().map(|k| (k, None)).collect()
            }
            Utility::Psi if users > 1 => {
                let bounds: Vec<(usize, f64, f64)> =
                    (0..users).map(|k| self.grid_bound(n, k, gamma, eps[k])).collect();
                let lead = (0..users)
                    .max_by(|&x, &y| bounds[x].1.total_cmp(&bounds[y].1).then(y.cmp(&x)))
                    .expect("users > 1");
                let p = self.refine(n, lead, bounds[lead].0, gamma, eps[lead]);
                let floor = self.value(n, lead, p, gamma, eps[lead]);
                (0..users)
                    .filter(|&k| bounds[k].2 + tie_tolerance(bounds[k].2, floor) >= floor)
                    .map(|k| (k, Some(bounds[k].0)))
                    .collect()
            }
            _ => (0..users).map(|k| (k, None)).collect(),
        };
        let mut best: Option<SlotDecision> = None;
        for (k, g) in candidates {
            let p = match g {
                Some(g) => self.refine(n, k, g, gamma, eps[k]),
                None => self.best_power(n, k, gamma, eps[k]),
            };
            let value = self.value(n, k, p, gamma, eps[k]);
            let better = match &best {
                None => true,
                Some(b) => value > b.value + tie_tolerance(value, b.value),
            };
            if better {
                best = Some(SlotDecision {
                    slot: n,
                    id_user: k,
                    power: p,
                    value,
                });
            }
        }
        best.expect("at least one candidate")
    }

    /// Drops decoding candidates whose concavity upper bound falls below
    /// another candidate's achieved value. Candidates with a rate price are
    /// always kept.
    fn screen(&self, n: usize, gamma: f64, eps: &[f64]) -> Vec<usize> {
        let inst = self.instance;
        let gains = inst.gains.slot(n);
        let users = gains.len();
        let w = &self.weights[n * users..(n + 1) * users];
        let a = self.a();
        let t = self.slots_f;
        // Maximizer of the all-harvesting relaxation F(p) = base - Σ_j w_j e_j(p) - γp/T.
        let slope_all = |p: f64| -> (f64, f64) {
            let mut d = -gamma / t;
            let mut dd = 0.0;
            for (&wj, &hj) in w.iter().zip(gains) {
                let term = wj * a * hj * self.eh_exp(p, hj);
                d += term;
                dd -= term * a * hj;
            }
            (d, dd)
        };
        let p_hat = if slope_all(0.0).0 <= 0.0 {
            0.0
        } else if slope_all(inst.p_max).0 >= 0.0 {
            inst.p_max
        } else {
            decreasing_root(slope_all, 0.0, inst.p_max, 0.0, 1e-10)
        };
        let exps: Vec<f64> = gains.iter().map(|&h| self.eh_exp(p_hat, h)).collect();
        let total: f64 = w.iter().zip(&exps).map(|(wj, ej)| wj * ej).sum();
        let f_hat = self.base[n] - total - gamma * p_hat / t;
        let d_all = slope_all(p_hat).0;
        let mut lower = vec![f64::NEG_INFINITY; users];
        let mut upper = vec![f64::INFINITY; users];
        for k in 0..users {
            if eps[k] > 0.0 {
                continue;
            }
            // F_k(p) = F(p) - w_k (e^{ab} - e_k(p)), concave in p.
            let value = f_hat - w[k] * (self.idle_exp - exps[k]);
            let slope_k = d_all - w[k] * a * gains[k] * exps[k];
            lower[k] = value;
            // tangent bound on [0, p_hat] plus the flat continuation above it
            upper[k] = value + (-slope_k).max(0.0) * p_hat + slope_k.max(0.0) * (inst.p_max - p_hat);
        }
        let best_lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..users)
            .filter(|&k| {
                eps[k] > 0.0 || upper[k] + tie_tolerance(upper[k], best_lower) >= best_lower
            })
            .collect()
    }
}

/// Power grid for slot `n`: uniform points plus points around each user's
/// turn-on power `b / h_j`, with the `Ψ` table over it.
fn psi_grid(instance: &ProblemInstance, n: usize) -> (Vec<f64>, Vec<f64>) {
    const UNIFORM: usize = 33;
    const OFFSETS: [f64; 9] = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0];
    let c = &instance.circuit;
    let p_max = instance.p_max;
    let gains = instance.gains.slot(n);
    let mut grid: Vec<f64> = (0..UNIFORM).map(|i| p_max * i as f64 / (UNIFORM - 1) as f64).collect();
    for &h in gains {
        for off in OFFSETS {
            let p = (c.midpoint() + off / c.steepness()) / h;
            if p > 0.0 && p < p_max {
                grid.push(p);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let table = grid
        .iter()
        .flat_map(|&p| gains.iter().map(move |&h| psi_unchecked(c, p * h)))
        .collect();
    (grid, table)
}

/// Largest slope of `Σ_j Ψ(p h_j)` over each interval of `grid`.
fn interval_slopes(instance: &ProblemInstance, n: usize, grid: &[f64]) -> Vec<f64> {
    let c = &instance.circuit;
    let (a, b, m) = (c.steepness(), c.midpoint(), c.max_dc_power());
    let gains = instance.gains.slot(n);
    grid.windows(2)
        .map(|w| {
            gains
                .iter()
                .map(|&h| {
                    // σ' peaks where the argument crosses zero
                    let (lo, hi) = (a * (w[0] * h - b), a * (w[1] * h - b));
                    let z = if lo > 0.0 { lo } else if hi < 0.0 { hi } else { 0.0 };
                    let s = logistic(z);
                    m * a * h * s * (1.0 - s)
                })
                .sum()
        })
        .collect()
}

/// Golden-section maximization on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    // relative to the starting bracket, so a maximum at zero ends too
    let tol = 1e-13 * hi.abs().max(lo.abs()).max(1e-300);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

fn tie_tolerance(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Best decision for one slot at fixed prices.
pub fn per_slot_best(
    instance: &ProblemInstance,
    slot: usize,
    utility: Utility<'_>,
    duals: &DualState,
) -> Result<SlotDecision> {
    instance.validate()?;
    if slot >= instance.slots() {
        return Err(Error::Dimension(format!("slot {slot} out of range")));
    }
    if duals.rate_multipliers.len() != instance.users() {
        return Err(Error::Dimension("one rate multiplier per user required".into()));
    }
    let lag = SlotLagrangian::new(instance, utility)?;
    Ok(lag.best(slot, duals.gamma, &duals.rate_multipliers))
}

/// Evaluation bookkeeping shared by both phases.
struct Search<'a, 'b> {
    lag: &'b SlotLagrangian<'a>,
    evaluations: usize,
    cap: usize,
}

struct Sweep {
    decisions: Vec<SlotDecision>,
    total_power: f64,
}

impl Search<'_, '_> {
    fn tick(&mut self, cost: usize) -> Result<()> {
        self.evaluations += cost;
        if self.evaluations > self.cap {
            return Err(Error::DualCap {
                iterations: self.evaluations,
                violation: "Lagrangian evaluation budget exhausted".into(),
            });
        }
        Ok(())
    }

    fn sweep(&mut self, gamma: f64, eps: &[f64]) -> Result<Sweep> {
        self.tick(1)?;
        let slots = self.lag.instance.slots();
        let decisions: Vec<SlotDecision> =
            (0..slots).map(|n| self.lag.best(n, gamma, eps)).collect();
        let total_power = decisions.iter().map(|d| d.power).sum();
        Ok(Sweep {
            decisions,
            total_power,
        })
    }

    /// Smallest `γ >= 0` whose sweep fits the power budget, as a bracket.
    fn gamma_bracket(&mut self, eps: &[f64], rel_tol: f64, warm: f64) -> Result<(f64, f64)> {
        let budget = self.budget();
        if self.sweep(0.0, eps)?.total_power <= budget {
            return Ok((0.0, 0.0));
        }
        let guess = if warm > 0.0 { warm } else { self.gamma_scale() };
        let mut err = None;
        let bracket = bracket_from(
            |g| match self.sweep(g, eps) {
                Ok(s) => s.total_power - budget,
                Err(e) => {
                    err.get_or_insert(e);
                    -1.0
                }
            },
            guess,
            if warm > 0.0 { 4.0 * rel_tol } else { 1.0 },
            f64::MAX,
        );
        if let Some(e) = err {
            return Err(e);
        }
        let Some((lo, hi)) = bracket else {
            return Err(Error::DualCap {
                iterations: self.evaluations,
                violation: "no finite power price meets the average-power budget".into(),
            });
        };
        let mut err = None;
        let bracket = bisect_decreasing(
            |g| match self.sweep(g, eps) {
                Ok(s) => s.total_power - budget,
                Err(e) => {
                    err.get_or_insert(e);
                    -1.0
                }
            },
            lo,
            hi,
            rel_tol,
            400,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(bracket),
        }
    }

    fn budget(&self) -> f64 {
        let inst = self.lag.instance;
        inst.p_av * inst.slots() as f64 * (1.0 + 1e-14)
    }

    /// A price above which no slot transmits for harvesting alone.
    fn gamma_scale(&self) -> f64 {
        let inst = self.lag.instance;
        let t = inst.slots() as f64;
        let scale = match self.lag.utility {
            Utility::Linear { eta } => (0..inst.slots())
                .map(|n| eta * inst.gains.slot(n).iter().sum::<f64>())
                .fold(0.0, f64::max),
            Utility::Psi => {
                let c = &inst.circuit;
                (0..inst.slots())
                    .map(|n| {
                        inst.gains.slot(n).iter().sum::<f64>() * c.steepness() * c.max_dc_power() / 4.0
                    })
                    .fold(0.0, f64::max)
            }
            Utility::Fractional { .. } => {
                let a = self.lag.a();
                (0..inst.slots())
                    .map(|n| {
                        let k = inst.users();
                        (0..k)
                            .map(|j| {
                                self.lag.weights[n * k + j]
                                    * a
                                    * inst.gains.get(j, n)
                                    * self.lag.idle_exp
                            })
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            }
        };
        (t * scale).max(1e-300)
    }
}

/// Solves the inner problem for a given utility.
///
/// `warm` optionally carries prices from a previous call on a nearby problem.
pub fn solve_inner(
    instance: &ProblemInstance,
    utility: Utility<'_>,
    options: &InnerOptions,
    warm: Option<&DualState>,
) -> Result<InnerSolution> {
    instance.validate()?;
    let lag = SlotLagrangian::new(instance, utility)?;
    let mut search = Search {
        lag: &lag,
        evaluations: 0,
        cap: options.max_evaluations,
    };
    let mut best: Option<InnerSolution> = None;
    let mut first_error = None;
    let (selections, gamma_guess, eps_guess) = select_users(&mut search, options, warm)?;
    for selection in selections {
        let (schedule, duals) = match allocate_power(&lag, selection, gamma_guess, &eps_guess, options) {
            Ok(x) => x,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let utility_value: f64 = (0..instance.slots())
            .map(|n| lag.utility(n, schedule.id_user[n], schedule.slot_power[n]))
            .sum();
        if best.as_ref().is_none_or(|b| utility_value > b.utility) {
            best = Some(InnerSolution {
                virtual_power: schedule.virtual_power(instance.users()),
                schedule,
                duals,
                utility: utility_value,
            });
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Err(first_error.expect("at least one candidate selection")),
    }
}

/// Powers for a fixed choice of decoding user per slot. Exact when the
/// utility is concave in power; a selection that cannot meet the rate
/// targets is first repaired by handing slots to the users that fall short.
pub fn solve_inner_for_selection(
    instance: &ProblemInstance,
    utility: Utility<'_>,
    selection: Vec<usize>,
    options: &InnerOptions,
) -> Result<InnerSolution> {
    instance.validate()?;
    if selection.len() != instance.slots() || selection.iter().any(|&k| k >= instance.users()) {
        return Err(Error::Dimension(format!(
            "selection {selection:?} does not fit {} users and {} slots",
            instance.users(),
            instance.slots()
        )));
    }
    let lag = SlotLagrangian::new(instance, utility)?;
    let (schedule, duals) = allocate_power(&lag, selection, 0.0, &vec![0.0; instance.users()], options)?;
    let utility_value = (0..instance.slots())
        .map(|n| lag.utility(n, schedule.id_user[n], schedule.slot_power[n]))
        .sum();
    Ok(InnerSolution {
        virtual_power: schedule.virtual_power(instance.users()),
        schedule,
        duals,
        utility: utility_value,
    })
}

/// Phase 1: prices for the joint argmax, returning candidate per-slot users
/// and the prices found.
///
/// With binary selections the argmax can jump as a price crosses a
/// threshold, leaving neither side of the jump optimal on its own. Both sides
/// of every final bracket are returned so the power phase can pick the better.
fn select_users(
    search: &mut Search<'_, '_>,
    options: &InnerOptions,
    warm: Option<&DualState>,
) -> Result<(Vec<Vec<usize>>, f64, Vec<f64>)> {
    let inst = search.lag.instance;
    let rate_users = inst.rate_users();
    let mut eps = match warm {
        Some(d) if d.rate_multipliers.len() == inst.users() => d.rate_multipliers.clone(),
        _ => vec![0.0; inst.users()],
    };
    for k in 0..inst.users() {
        if !rate_users.contains(&k) {
            eps[k] = 0.0;
        }
    }
    // the latest price seeds the next bracket; prices move little between
    // nearby rate multipliers
    let warm_gamma = std::cell::Cell::new(warm.map_or(0.0, |d| d.gamma));
    let gamma_tol = options.selection_gamma_tol;
    let mut eps_below = vec![0.0; inst.users()];

    let rate_at = |search: &mut Search<'_, '_>, eps: &[f64], user: usize| -> Result<(f64, f64)> {
        let (lo, hi) = search.gamma_bracket(eps, options.rate_search_gamma_tol, warm_gamma.get())?;

        if hi > 0.0 {
            warm_gamma.set(hi);
        }
        let sweep = search.sweep(lo, eps)?;
        Ok((average_rate(inst, &sweep.decisions, user), lo))
    };

    for _ in 0..options.max_rate_sweeps.max(1) {
        let mut changed = false;
        for &r in &rate_users {
            let target = inst.c_req[r];
            let previous = eps[r];
            eps[r] = 0.0;
            if rate_at(search, &eps, r)?.0 >= target {
                changed |= previous != 0.0;
                continue;
            }
            let mut err = None;
            let mut gap = |e: f64| {
                let mut trial = eps.clone();
                trial[r] = e;
                match rate_at(search, &trial, r) {
                    Ok((rate, _)) => target - rate,
                    Err(x) => {
                        err.get_or_insert(x);
                        -1.0
                    }
                }
            };
            let (guess, step) = if previous > 0.0 {
                (previous, 4.0 * options.selection_rate_tol)
            } else {
                (1e-9, 1.0)
            };
            let Some((lo, hi)) = bracket_from(&mut gap, guess, step, 1e30) else {
                if let Some(e) = err {
                    return Err(e);
                }
                // leave the remainder to the power phase repair
                eps[r] = 1e30;
                changed |= previous != 1e30;
                continue;
            };
            let (lo, hi) = bisect_decreasing(&mut gap, lo, hi, options.selection_rate_tol, 400);
            if let Some(e) = err {
                return Err(e);
            }
            eps[r] = hi;
            eps_below[r] = lo;
            changed |= (hi - previous).abs() > options.selection_rate_tol * hi.max(previous);
        }
        if !changed || rate_users.len() <= 1 {
            break;
        }
    }
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut push = |sel: Vec<usize>| {
        if !candidates.contains(&sel) {
            candidates.push(sel);
        }
    };
    let (lo, hi) = search.gamma_bracket(&eps, gamma_tol, warm_gamma.get())?;
    // The power-hungry side first: its decisions name the users that
    // actually receive power.
    for g in [lo, hi] {
        push(search.sweep(g, &eps)?.decisions.iter().map(|d| d.id_user).collect());
    }
    for &r in &rate_users {
        if eps[r] > 0.0 {
            let mut below = eps.clone();
            below[r] = eps_below[r];
            let (lo, _) = search.gamma_bracket(&below, gamma_tol, warm_gamma.get())?;
            push(search.sweep(lo, &below)?.decisions.iter().map(|d| d.id_user).collect());
        }
    }
    Ok((candidates, hi, eps))
}

fn average_rate(inst: &ProblemInstance, decisions: &[SlotDecision], user: usize) -> f64 {
    decisions
        .iter()
        .filter(|d| d.id_user == user)
        .map(|d| capacity(d.power, inst.gains.get(user, d.slot), inst.sigma2))
        .sum::<f64>()
        / inst.slots() as f64
}

/// Phase 2: exact power allocation for a frozen selection.
fn allocate_power(
    lag: &SlotLagrangian<'_>,
    mut selection: Vec<usize>,
    gamma_guess: f64,
    eps_guess: &[f64],
    options: &InnerOptions,
) -> Result<(Schedule, DualState)> {
    let inst = lag.instance;
    repair_selection(inst, &mut selection)?;
    let t = inst.slots();
    let budget = inst.p_av * t as f64;
    let rate_users = inst.rate_users();
    let tol = options.power_tol;

    // Powers at price γ with each rate user's ε tuned to meet its target.
    // Each search starts from the last ε found, with a first step sized by
    // how far ε moved last time.
    let eps_seed = std::cell::RefCell::new(
        eps_guess
            .iter()
            .map(|&e| if e > 0.0 { (e, 1e-3) } else { (1e-9, 1.0) })
            .collect::<Vec<_>>(),
    );
    let powers_at = |gamma: f64| -> (Vec<f64>, Vec<f64>) {
        let mut eps = vec![0.0; inst.users()];
        let mut p: Vec<f64> = (0..t)
            .map(|n| lag.best_power(n, selection[n], gamma, 0.0))
            .collect();
        for &r in &rate_users {
            let slots: Vec<usize> = (0..t).filter(|&n| selection[n] == r).collect();
            let rate = |e: f64, p: &mut [f64]| -> f64 {
                let mut sum = 0.0;
                for &n in &slots {
                    p[n] = lag.best_power(n, r, gamma, e);
                    sum += capacity(p[n], inst.gains.get(r, n), inst.sigma2);
                }
                sum / t as f64
            };
            let target = inst.c_req[r];
            if rate(0.0, &mut p) >= target {
                continue;
            }
            let (seed, step) = eps_seed.borrow()[r];
            let hi = match bracket_from(|e| target - rate(e, &mut p), seed, step, 1e300) {
                Some((lo, hi)) => bisect_decreasing(|e| target - rate(e, &mut p), lo, hi, tol, 400).1,
                None => 1e300,
            };
            rate(hi, &mut p);
            eps[r] = hi;
            let moved = (hi / seed - 1.0).abs();
            eps_seed.borrow_mut()[r] = (hi, (2.0 * moved).clamp(4.0 * tol, 1.0));
        }
        (p, eps)
    };

    let (p0, eps0) = powers_at(0.0);
    if p0.iter().sum::<f64>() <= budget * (1.0 + 1e-14) {
        return Ok((
            Schedule {
                id_user: selection,
                slot_power: p0,
            },
            DualState {
                gamma: 0.0,
                rate_multipliers: eps0,
            },
        ));
    }
    let total = |g: f64| powers_at(g).0.iter().sum::<f64>();
    let guess = if gamma_guess > 0.0 { gamma_guess } else { 1e-12 };
    let Some((lo, hi)) = bracket_from(|g| total(g) - budget, guess, 1e-6, f64::MAX) else {
        return Err(Error::Infeasible {
            constraint: "average power",
            detail: "rate targets need more than the average power budget".into(),
        });
    };
    let (lo, hi) = bisect_decreasing(|g| total(g) - budget, lo, hi, tol, 2000);
    let (p_hi, eps_hi) = powers_at(hi);
    let (p_lo, _) = powers_at(lo);
    let s_hi: f64 = p_hi.iter().sum();
    let s_lo: f64 = p_lo.iter().sum();
    // Both ends meet every rate target; rates are concave in power, so any
    // convex combination does too.
    let theta = if s_lo > s_hi {
        ((budget - s_hi) / (s_lo - s_hi)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut slot_power: Vec<f64> = p_hi
        .iter()
        .zip(&p_lo)
        .map(|(h, l)| (h + theta * (l - h)).clamp(0.0, inst.p_max))
        .collect();
    // rounding can push the sum a few ulps over the budget
    let sum: f64 = slot_power.iter().sum();
    if sum > budget {
        let scale = budget / sum;
        for (n, p) in slot_power.iter_mut().enumerate() {
            if p_hi[n] <= *p * scale || !rate_users.contains(&selection[n]) {
                *p = (*p * scale).max(p_hi[n].min(*p));
            }
        }
    }
    Ok((
        Schedule {
            id_user: selection,
            slot_power,
        },
        DualState {
            gamma: hi,
            rate_multipliers: eps_hi,
        },
    ))
}

/// Minimum total power for `user` to reach `target` over `slots` with
/// per-slot cap, by water-filling. `None` if the cap makes it unreachable.
fn min_power_for_rate(inst: &ProblemInstance, user: usize, slots: &[usize], target: f64) -> Option<f64> {
    let t = inst.slots() as f64;
    let gains: Vec<f64> = slots.iter().map(|&n| inst.gains.get(user, n)).collect();
    let rate_at = |level: f64| -> (f64, f64) {
        let mut rate = 0.0;
        let mut power = 0.0;
        for &h in &gains {
            let p = (level - inst.sigma2 / h).clamp(0.0, inst.p_max);
            rate += capacity(p, h, inst.sigma2);
            power += p;
        }
        (rate / t, power)
    };
    if target <= 0.0 {
        return Some(0.0);
    }
    let max_rate = rate_at(f64::INFINITY).0;
    if max_rate < target {
        return None;
    }
    let mut hi = inst.p_max + gains.iter().map(|h| inst.sigma2 / h).fold(0.0, f64::max);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid).0 >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(rate_at(hi).1)
}

/// Reassigns slots until every rate target is reachable within the budget.
fn repair_selection(inst: &ProblemInstance, selection: &mut [usize]) -> Result<()> {
    let rate_users = inst.rate_users();
    if rate_users.is_empty() {
        return Ok(());
    }
    let t = inst.slots();
    let budget = inst.p_av * t as f64;
    loop {
        let mut needs: Vec<(usize, Option<f64>)> = Vec::new();
        for &r in &rate_users {
            let slots: Vec<usize> = (0..t).filter(|&n| selection[n] == r).collect();
            needs.push((r, min_power_for_rate(inst, r, &slots, inst.c_req[r])));
        }
        let short = needs.iter().find(|(_, p)| p.is_none()).map(|(r, _)| *r);
        let total: f64 = needs.iter().filter_map(|(_, p)| *p).sum();
        let victim = match short {
            Some(r) => r,
            None if total <= budget * (1.0 + 1e-12) => return Ok(()),
            None => {
                needs
                    .iter()
                    .max_by(|a, b| a.1.unwrap().total_cmp(&b.1.unwrap()))
                    .expect("non-empty")
                    .0
            }
        };
        // best free slot: currently serving a user without a rate target
        let free = (0..t)
            .filter(|&n| inst.c_req[selection[n]] <= 0.0)
            .max_by(|&x, &y| inst.gains.get(victim, x).total_cmp(&inst.gains.get(victim, y)));
        match free {
            Some(n) => selection[n] = victim,
            None => {
                return Err(Error::Infeasible {
                    constraint: "rate target",
                    detail: format!(
                        "user {victim} cannot reach {} bit/s/Hz with the remaining slots and budget",
                        inst.c_req[victim]
                    ),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::EhCircuitParams;

    fn instance(rows: &[Vec<f64>], p_av: f64, p_max: f64, c_req: Vec<f64>, sigma2: f64) -> ProblemInstance {
        ProblemInstance::new(
            UserSlotMatrix::from_rows(rows).unwrap(),
            p_av,
            p_max,
            c_req,
            sigma2,
            EhCircuitParams::reference(),
        )
        .unwrap()
    }

    /// Fixed-point parameters for a uniform received power guess.
    fn fixed_point_params(inst: &ProblemInstance, reference_power: f64) -> (Vec<f64>, Vec<f64>) {
        let c = &inst.circuit;
        let mut mu = Vec::new();
        let mut beta = Vec::new();
        for n in 0..inst.slots() {
            for k in 0..inst.users() {
                let g = c.denominator(reference_power * inst.gains.get(k, n));
                mu.push(1.0 / g);
                beta.push(c.max_dc_power() / g);
            }
        }
        (mu, beta)
    }

    #[test]
    fn waterfilling_examples() {
        assert_eq!(waterfilling_power(0.0, 1.0, 0.5, 1e-3).unwrap(), 0.0);
        let (sigma2, h, price) = (1e-3, 0.5, 2.0);
        let eps = 2.0 * sigma2 / h * LN_2 * price;
        let p = waterfilling_power(eps, price, h, sigma2).unwrap();
        assert!((p - sigma2 / h).abs() < 1e-15);
        assert!(waterfilling_power(1.0, 0.0, 0.5, 1e-3).is_err());
        let mut last = 0.0;
        for i in 1..50 {
            let p = waterfilling_power(0.01, 1.0, i as f64 * 1e-3, 1e-4).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn priced_out_slot_idles_on_first_user() {
        let inst = instance(&[vec![0.002], vec![0.001], vec![0.003]], 1.0, 1.0, vec![0.0; 3], 1e-9);
        let (mu, beta) = fixed_point_params(&inst, 0.5);
        let util = Utility::Fractional { mu: &mu, beta: &beta };
        let duals = DualState {
            gamma: 1e9,
            rate_multipliers: vec![0.0; 3],
        };
        let d = per_slot_best(&inst, 0, util, &duals).unwrap();
        assert_eq!(d.power, 0.0);
        assert_eq!(d.id_user, 0);
    }

    #[test]
    fn free_power_goes_to_p_max() {
        let inst = instance(&[vec![0.002], vec![0.001]], 1.0, 1.0, vec![0.0; 2], 1e-9);
        let (mu, beta) = fixed_point_params(&inst, 0.3);
        let util = Utility::Fractional { mu: &mu, beta: &beta };
        let d = per_slot_best(&inst, 0, util, &DualState::zeros(2)).unwrap();
        assert_eq!(d.power, 1.0);
        // Compare the two candidates directly: the one leaving more harvest wins.
        let c = &inst.circuit;
        let term = |i: usize, received: f64| {
            mu[i] * (c.max_dc_power() - beta[i] * c.denominator(received))
        };
        let keep_user0 = term(0, 0.002) + term(1, 0.0);
        let keep_user1 = term(0, 0.0) + term(1, 0.001);
        let expected = if keep_user0 > keep_user1 { 1 } else { 0 };
        assert_eq!(d.id_user, expected);
        assert!((d.value - keep_user0.max(keep_user1)).abs() < 1e-15);
    }

    #[test]
    fn argmax_invariant_to_positive_scaling() {
        let inst = instance(
            &[vec![0.002], vec![0.0015], vec![0.001]],
            0.5,
            1.0,
            vec![0.4, 0.0, 0.0],
            1e-3,
        );
        let (mu, beta) = fixed_point_params(&inst, 0.4);
        let duals = DualState {
            gamma: 0.02,
            rate_multipliers: vec![0.003, 0.0, 0.0],
        };
        let d = per_slot_best(&inst, 0, Utility::Fractional { mu: &mu, beta: &beta }, &duals).unwrap();
        let scale = 7.5;
        let mu2: Vec<f64> = mu.iter().map(|m| m * scale).collect();
        let duals2 = DualState {
            gamma: duals.gamma * scale,
            rate_multipliers: duals.rate_multipliers.iter().map(|e| e * scale).collect(),
        };
        let d2 = per_slot_best(&inst, 0, Utility::Fractional { mu: &mu2, beta: &beta }, &duals2).unwrap();
        assert_eq!(d.id_user, d2.id_user);
        assert!((d.power - d2.power).abs() <= 1e-9 * d.power.max(1e-12));
    }

    #[test]
    fn slot_lagrangian_is_concave() {
        let inst = instance(
            &[vec![0.0021], vec![0.0013], vec![0.0009], vec![0.0030]],
            0.5,
            2.0,
            vec![0.3, 0.0, 0.0, 0.0],
            1e-4,
        );
        let (mu, beta) = fixed_point_params(&inst, 0.7);
        let lag = SlotLagrangian::new(&inst, Utility::Fractional { mu: &mu, beta: &beta }).unwrap();
        for k in 0..4 {
            let eps = if k == 0 { 0.01 } else { 0.0 };
            let grid: Vec<f64> = (0..=100).map(|i| 2.0 * i as f64 / 100.0).collect();
            let vals: Vec<f64> = grid.iter().map(|&p| lag.value(0, k, p, 0.01, eps)).collect();
            let slopes: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
            for s in slopes.windows(2) {
                assert!(s[1] <= s[0] + 1e-15, "user {k}: slope increased");
            }
        }
    }

    #[test]
    fn derivative_root_agrees_with_golden_section() {
        let inst = instance(
            &[vec![0.0021], vec![0.0013], vec![0.0009]],
            0.5,
            4.0,
            vec![0.3, 0.0, 0.0],
            1e-4,
        );
        let (mu, beta) = fixed_point_params(&inst, 0.7);
        let lag = SlotLagrangian::new(&inst, Utility::Fractional { mu: &mu, beta: &beta }).unwrap();
        for (gamma, eps) in [(0.05, 0.0), (0.2, 0.0), (0.05, 0.02), (1.0, 0.5)] {
            for k in 0..3 {
                let e = if k == 0 { eps } else { 0.0 };
                let p = lag.best_power(0, k, gamma, e);
                let g = golden_max(|x| lag.value(0, k, x, gamma, e), 0.0, inst.p_max);
                let vp = lag.value(0, k, p, gamma, e);
                let vg = lag.value(0, k, g, gamma, e);
                assert!(vp >= vg - 1e-14, "k={k} γ={gamma}: {p} vs {g}");
                assert!((p - g).abs() < 1e-5 * inst.p_max, "k={k} γ={gamma}: {p} vs {g}");
            }
        }
    }

    #[test]
    fn screening_keeps_the_argmax() {
        let rows: Vec<Vec<f64>> = (0..8).map(|k| vec![0.0005 + 0.0004 * k as f64]).collect();
        let inst = instance(&rows, 0.5, 3.0, vec![0.0; 8], 1e-9);
        for reference in [0.1, 0.5, 1.0, 2.5] {
            let (mu, beta) = fixed_point_params(&inst, reference);
            let lag = SlotLagrangian::new(&inst, Utility::Fractional { mu: &mu, beta: &beta }).unwrap();
            for gamma in [0.0, 0.01, 0.1, 1.0] {
                let eps = vec![0.0; 8];
                let d = lag.best(0, gamma, &eps);
                let exhaustive = (0..8)
                    .map(|k| lag.value(0, k, lag.best_power(0, k, gamma, 0.0), gamma, 0.0))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((d.value - exhaustive).abs() <= 1e-12 * exhaustive.abs());
            }
        }
    }

    #[test]
    fn unconstrained_rates_meet_power_budget() {
        let inst = instance(
            &[vec![0.002, 0.0011, 0.0017], vec![0.001, 0.0024, 0.0009]],
            0.4,
            1.0,
            vec![0.0, 0.0],
            1e-9,
        );
        let (mu, beta) = fixed_point_params(&inst, 0.4);
        let sol = solve_inner(&inst, Utility::Fractional { mu: &mu, beta: &beta }, &InnerOptions::default(), None)
            .unwrap();
        assert!(sol.duals.rate_multipliers.iter().all(|&e| e == 0.0));
        assert!(sol.duals.gamma > 0.0);
        let avg = sol.schedule.average_power();
        assert!((avg - 0.4).abs() < 1e-12, "{avg}");
        assert!(sol.duals.gamma * (avg - inst.p_av).abs() <= 1e-8);
    }

    #[test]
    fn slack_budget_has_zero_price() {
        let inst = instance(&[vec![0.002, 0.001], vec![0.001, 0.003]], 1.0, 1.0, vec![0.0, 0.0], 1e-9);
        let (mu, beta) = fixed_point_params(&inst, 0.4);
        let sol = solve_inner(&inst, Utility::Fractional { mu: &mu, beta: &beta }, &InnerOptions::default(), None)
            .unwrap();
        assert_eq!(sol.duals.gamma, 0.0);
        assert_eq!(sol.schedule.slot_power, vec![1.0, 1.0]);
    }

    #[test]
    fn active_rate_target_met_with_equality() {
        // user 0 is the better harvester, so only its rate target makes it decode
        let inst = instance(
            &[vec![0.0021, 0.0016], vec![0.0008, 0.0011]],
            0.6,
            1.2,
            vec![0.5, 0.0],
            2e-4,
        );
        // parameters from a schedule where user 1 decodes everywhere
        let start = Schedule {
            id_user: vec![1, 1],
            slot_power: vec![0.6, 0.6],
        };
        let rho = crate::solver::SosParameters::fixed_point(&inst, &start.virtual_power(2));
        let (mu, beta) = (rho.mu, rho.beta);
        let sol = solve_inner(&inst, Utility::Fractional { mu: &mu, beta: &beta }, &InnerOptions::default(), None)
            .unwrap();
        let rate = sol.schedule.average_rate(&inst, 0);
        assert!((rate - 0.5).abs() <= 1e-6, "rate {rate}");
        assert!(sol.duals.rate_multipliers[0] > 0.0);
        assert!(sol.schedule.average_power() <= inst.p_av + 1e-12);
        for n in 0..2 {
            for k in 0..2 {
                let v = sol.virtual_power.get(k, n);
                let s = sol.schedule.selection(k, n) as f64;
                assert!(v <= (1.0 - s) * inst.p_max + 1e-15);
                assert!(v <= sol.schedule.slot_power[n] + 1e-15);
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn unreachable_rate_is_infeasible() {
        let inst = instance(&[vec![1e-6], vec![1e-3]], 0.5, 1.0, vec![30.0, 0.0], 1e-3);
        let (mu, beta) = fixed_point_params(&inst, 0.5);
        let err = solve_inner(&inst, Utility::Fractional { mu: &mu, beta: &beta }, &InnerOptions::default(), None)
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible { constraint: "rate target", .. }), "{err}");
    }

    #[test]
    fn harvested_report_does_not_change_decisions() {
        // Ψ-sum versus harvested-sum differ by a shared affine map, so the
        // same parameters must yield the same schedule under either report.
        let inst = instance(
            &[vec![0.002, 0.0011, 0.0017], vec![0.001, 0.0024, 0.0009], vec![0.0015, 0.0012, 0.002]],
            0.5,
            1.0,
            vec![0.0; 3],
            1e-9,
        );
        let (mu, beta) = fixed_point_params(&inst, 0.5);
        let a = solve_inner(&inst, Utility::Fractional { mu: &mu, beta: &beta }, &InnerOptions::default(), None)
            .unwrap();
        let omega = inst.circuit.omega();
        let mu_e: Vec<f64> = mu.iter().map(|m| m / (1.0 - omega)).collect();
        let b = solve_inner(&inst, Utility::Fractional { mu: &mu_e, beta: &beta }, &InnerOptions::default(), None)
            .unwrap();
        assert_eq!(a.schedule.id_user, b.schedule.id_user);
        for (x, y) in a.schedule.slot_power.iter().zip(&b.schedule.slot_power) {
            assert!((x - y).abs() <= 1e-9 * x.max(1e-12));
        }
    }
}
