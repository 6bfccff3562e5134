#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swipt_alloc::channel::{generate_realization, ChannelConfig};
use swipt_alloc::eh_model::EhCircuitParams;
use swipt_alloc::problem::check_feasibility;
use swipt_alloc::{AllocationSolution, ProblemInstance};

/// Random instance with `K, T <= 3`, drawn from stream `seed`. Roughly two in
/// five carry a rate target on user 0.
pub fn tiny_instance(seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3usize);
    let t = rng.random_range(1..=3usize);
    let d: Vec<f64> = (0..k).map(|_| rng.random_range(10.0..30.0)).collect();
    let gains = generate_realization(&ChannelConfig::default(), k, t, &d, seed).unwrap().gains;
    let p_max: f64 = rng.random_range(1.0..40.0);
    let p_av = p_max * rng.random_range(0.1..1.0);
    let rate_case = rng.random_bool(0.4);
    let sigma2 = if rate_case { 1e-4 * p_max } else { 1e-12 };
    let mut c_req = vec![0.0; k];
    if rate_case {
        c_req[0] = rng.random_range(0.1..1.0);
    }
    ProblemInstance::new(gains, p_av, p_max, c_req, sigma2, EhCircuitParams::reference()).unwrap()
}

/// Largest grid the oracle budget allows for this instance, capped at 4001.
pub fn oracle_grid(instance: &ProblemInstance) -> usize {
    let (k, t) = (instance.users() as f64, instance.slots() as i32);
    ((1e7 / k.powi(t)).powf(1.0 / t as f64).floor() as usize).min(4001)
}

/// Instance with `K ∈ {2, 5, 10}`, `T ∈ {2, 5, 20}` (cycling through all nine
/// pairs with the seed) and peak power between 36 and 46 dBm; about half
/// carry a rate target on user 0.
pub fn medium_instance(seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 7);
    let k = [2, 5, 10][seed as usize % 3];
    let t = [2, 5, 20][seed as usize / 3 % 3];
    let d: Vec<f64> = (0..k).map(|_| rng.random_range(10.0..30.0)).collect();
    let gains = generate_realization(&ChannelConfig::default(), k, t, &d, seed).unwrap().gains;
    let p_max = 10f64.powf((rng.random_range(36.0..46.0) - 30.0) / 10.0);
    let p_av = p_max * rng.random_range(0.2..0.8);
    let mut c_req = vec![0.0; k];
    if rng.random_bool(0.5) {
        c_req[0] = 0.5;
    }
    ProblemInstance::new(gains, p_av, p_max, c_req, 1e-9, EhCircuitParams::reference()).unwrap()
}

/// Binary selection with one decoder per slot, and the power and rate
/// constraints within 1e-9. Returns what is wrong, if anything.
pub fn tightness_problems(instance: &ProblemInstance, solution: &AllocationSolution) -> Vec<String> {
    let mut out = Vec::new();
    let (k, t) = (instance.users(), instance.slots());
    for n in 0..t {
        let chosen: u32 = (0..k).map(|u| u32::from(solution.selection(u, n))).sum();
        if chosen > 1 {
            out.push(format!("slot {n} has {chosen} decoders"));
        }
        for u in 0..k {
            let s = solution.selection(u, n);
            let expected = if s == 1 { 0.0 } else { solution.schedule.slot_power[n] };
            if solution.virtual_power.get(u, n) != expected {
                out.push(format!("virtual power of user {u} in slot {n} is not (1 - s) p"));
            }
        }
    }
    for v in check_feasibility(instance, &solution.schedule, 1e-9, 1e-9).unwrap() {
        out.push(v.to_string());
    }
    out
}
