//! Problem instances, schedules and objective evaluation.

use crate::channel::capacity;
use crate::eh_model::{harvested, psi_unchecked, EhCircuitParams};
use crate::error::{domain, Error, Result};
use crate::solver::SosParameters;

/// Dense `users x slots` matrix stored slot-major, so entry `(k, n)` sits at
/// flat index `n * users + k`. The same flattening indexes the outer-loop
/// parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSlotMatrix {
    users: usize,
    slots: usize,
    data: Vec<f64>,
}

impl UserSlotMatrix {
    pub fn zeros(users: usize, slots: usize) -> Self {
        UserSlotMatrix {
            users,
            slots,
            data: vec![0.0; users * slots],
        }
    }

    pub fn from_fn(users: usize, slots: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(users, slots);
        for n in 0..slots {
            for k in 0..users {
                m.data[n * users + k] = f(k, n);
            }
        }
        m
    }

    /// Builds from per-user rows `rows[k][n]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let users = rows.len();
        let slots = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != slots) {
            return Err(Error::Dimension("ragged gain rows".into()));
        }
        Ok(Self::from_fn(users, slots, |k, n| rows[k][n]))
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Flat index of `(k, n)`.
    pub fn index(&self, user: usize, slot: usize) -> usize {
        slot * self.users + user
    }

    pub fn get(&self, user: usize, slot: usize) -> f64 {
        self.data[self.index(user, slot)]
    }

    pub fn set(&mut self, user: usize, slot: usize, value: f64) {
        let i = self.index(user, slot);
        self.data[i] = value;
    }

    /// The `K` entries of one slot.
    pub fn slot(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.users..(slot + 1) * self.users]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// One scheduling problem over `K` users and `T` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    /// Channel power gains `h_k(n)`.
    pub gains: UserSlotMatrix,
    /// Average transmit power budget (W).
    pub p_av: f64,
    /// Per-slot transmit power ceiling (W).
    pub p_max: f64,
    /// Minimum average rate per user (bit/s/Hz).
    pub c_req: Vec<f64>,
    /// Receiver noise power (W).
    pub sigma2: f64,
    pub circuit: EhCircuitParams,
}

impl ProblemInstance {
    pub fn new(
        gains: UserSlotMatrix,
        p_av: f64,
        p_max: f64,
        c_req: Vec<f64>,
        sigma2: f64,
        circuit: EhCircuitParams,
    ) -> Result<Self> {
        let inst = ProblemInstance {
            gains,
            p_av,
            p_max,
            c_req,
            sigma2,
            circuit,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn users(&self) -> usize {
        self.gains.users()
    }

    pub fn slots(&self) -> usize {
        self.gains.slots()
    }

    /// Number of `(user, slot)` terms, `N = K T`.
    pub fn terms(&self) -> usize {
        self.users() * self.slots()
    }

    pub fn validate(&self) -> Result<()> {
        if self.users() == 0 || self.slots() == 0 {
            return Err(domain("instance needs at least one user and one slot"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(domain(format!("p_max must be positive, got {}", self.p_max)));
        }
        if !(self.p_av >= 0.0 && self.p_av <= self.p_max) {
            return Err(domain(format!(
                "p_av must lie in [0, p_max = {}], got {}",
                self.p_max, self.p_av
            )));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(domain(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.c_req.len() != self.users() {
            return Err(Error::Dimension(format!(
                "{} rate targets for {} users",
                self.c_req.len(),
                self.users()
            )));
        }
        if self.c_req.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(domain("rate targets must be finite and non-negative"));
        }
        if self.gains.as_slice().iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(domain("channel gains must be positive and finite"));
        }
        Ok(())
    }

    /// Users with a strictly positive rate target.
    pub fn rate_users(&self) -> Vec<usize> {
        (0..self.users()).filter(|&k| self.c_req[k] > 0.0).collect()
    }
}

/// Per-slot information-decoding user and transmit power.
///
/// Exactly one user is named per slot; a slot with zero power is equivalent
/// to serving nobody.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub id_user: Vec<usize>,
    pub slot_power: Vec<f64>,
}

impl Schedule {
    /// Binary selection `s_k(n)`.
    pub fn selection(&self, user: usize, slot: usize) -> u8 {
        u8::from(self.id_user[slot] == user)
    }

    /// Received power at each harvesting user, `(1 - s_k(n)) P_tot(n)`.
    pub fn virtual_power(&self, users: usize) -> UserSlotMatrix {
        UserSlotMatrix::from_fn(users, self.slot_power.len(), |k, n| {
            if self.id_user[n] == k {
                0.0
            } else {
                self.slot_power[n]
            }
        })
    }

    pub fn average_power(&self) -> f64 {
        self.slot_power.iter().sum::<f64>() / self.slot_power.len() as f64
    }

    /// Average rate of `user` over the slots where it decodes.
    pub fn average_rate(&self, instance: &ProblemInstance, user: usize) -> f64 {
        let total: f64 = (0..self.slot_power.len())
            .filter(|&n| self.id_user[n] == user)
            .map(|n| capacity(self.slot_power[n], instance.gains.get(user, n), instance.sigma2))
            .sum();
        total / self.slot_power.len() as f64
    }

    fn check_dims(&self, instance: &ProblemInstance) -> Result<()> {
        if self.id_user.len() != instance.slots() || self.slot_power.len() != instance.slots() {
            return Err(Error::Dimension(format!(
                "schedule covers {}/{} slots, instance has {}",
                self.id_user.len(),
                self.slot_power.len(),
                instance.slots()
            )));
        }
        if let Some(&k) = self.id_user.iter().find(|&&k| k >= instance.users()) {
            return Err(Error::Dimension(format!(
                "user index {k} out of range for {} users",
                instance.users()
            )));
        }
        Ok(())
    }
}

/// Objective values of a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// `Σ Ψ(P_virtual h)` over all `(n, k)`, including `MΩ` for idle terms.
    pub psi_sum: f64,
    /// Total harvested DC power `Σ E(P_virtual h)`.
    pub harvested_sum: f64,
}

/// Scores a schedule under the non-linear harvesting model.
pub fn evaluate_objective(instance: &ProblemInstance, schedule: &Schedule) -> Result<Objective> {
    schedule.check_dims(instance)?;
    let circuit = &instance.circuit;
    let mut psi_sum = 0.0;
    let mut harvested_sum = 0.0;
    for n in 0..instance.slots() {
        for k in 0..instance.users() {
            let received = if schedule.id_user[n] == k {
                0.0
            } else {
                schedule.slot_power[n] * instance.gains.get(k, n)
            };
            psi_sum += psi_unchecked(circuit, received);
            harvested_sum += harvested(circuit, received);
        }
    }
    Ok(Objective {
        psi_sum,
        harvested_sum,
    })
}

/// A constraint a schedule breaks, with the amount.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AveragePower { average: f64, budget: f64 },
    SlotPower { slot: usize, power: f64 },
    Rate { user: usize, rate: f64, required: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::AveragePower { average, budget } => {
                write!(f, "average power {average:e} W exceeds {budget:e} W")
            }
            Violation::SlotPower { slot, power } => {
                write!(f, "slot {slot} power {power:e} W outside [0, P_max]")
            }
            Violation::Rate {
                user,
                rate,
                required,
            } => write!(f, "user {user} average rate {rate:e} below {required:e}"),
        }
    }
}

/// Checks the average-power, peak-power and rate constraints with absolute slack `power_tol` (W) and `rate_tol` (bit/s/Hz).
pub fn check_feasibility(
    instance: &ProblemInstance,
    schedule: &Schedule,
    power_tol: f64,
    rate_tol: f64,
) -> Result<Vec<Violation>> {
    schedule.check_dims(instance)?;
    let mut out = Vec::new();
    let avg = schedule.average_power();
    if avg > instance.p_av + power_tol {
        out.push(Violation::AveragePower {
            average: avg,
            budget: instance.p_av,
        });
    }
    for (n, &p) in schedule.slot_power.iter().enumerate() {
        if !(p >= -power_tol && p <= instance.p_max + power_tol) {
            out.push(Violation::SlotPower { slot: n, power: p });
        }
    }
    for k in 0..instance.users() {
        let rate = schedule.average_rate(instance, k);
        if rate < instance.c_req[k] - rate_tol {
            out.push(Violation::Rate {
                user: k,
                rate,
                required: instance.c_req[k],
            });
        }
    }
    Ok(out)
}

/// A complete allocation with objective values and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub schedule: Schedule,
    /// `P_k^virtual(n)`, the power received by each harvesting user.
    pub virtual_power: UserSlotMatrix,
    pub psi_objective: f64,
    pub harvested_power: f64,
    /// Outer iterations used (zero for non-iterative schemes).
    pub iterations: usize,
    /// Final `‖φ‖_∞` (zero for non-iterative schemes).
    pub residual_norm: f64,
    pub converged: bool,
    /// Final outer-loop parameters, when produced by the iterative solver.
    pub parameters: Option<SosParameters>,
}

impl AllocationSolution {
    /// Wraps a schedule, computing virtual powers and objective values.
    pub fn from_schedule(instance: &ProblemInstance, schedule: Schedule) -> Result<Self> {
        let objective = evaluate_objective(instance, &schedule)?;
        Ok(AllocationSolution {
            virtual_power: schedule.virtual_power(instance.users()),
            schedule,
            psi_objective: objective.psi_sum,
            harvested_power: objective.harvested_sum,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
            parameters: None,
        })
    }

    pub fn selection(&self, user: usize, slot: usize) -> u8 {
        self.schedule.selection(user, slot)
    }

    pub fn slot_power(&self) -> &[f64] {
        &self.schedule.slot_power
    }
}
