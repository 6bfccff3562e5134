mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use swipt_alloc::channel::{generate_realization, ChannelConfig};
use swipt_alloc::eh_model::{psi, EhCircuitParams};
use swipt_alloc::oracle::brute_force_oracle;
use swipt_alloc::problem::UserSlotMatrix;
use swipt_alloc::solver::{
    init_parameters, line_search_by, newton_direction, residuals, round_robin_schedule, solve, SolverOptions,
    SosParameters,
};
use swipt_alloc::ProblemInstance;

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

#[test]
fn two_user_reference_matches_enumeration() {
    let inst = two_user();
    let sol = solve(&inst, &SolverOptions::default()).unwrap();
    // user 1 decodes and user 0 harvests 0.002 W; the other choice harvests half
    let c = EhCircuitParams::reference();
    let best = psi(&c, 0.002).unwrap() + psi(&c, 0.0).unwrap();
    let other = psi(&c, 0.001).unwrap() + psi(&c, 0.0).unwrap();
    assert!(best > other);
    assert_eq!(sol.schedule.id_user, vec![1]);
    assert_relative_eq!(sol.schedule.slot_power[0], 1.0, max_relative = 1e-9);
    assert_relative_eq!(sol.psi_objective, best, max_relative = 1e-9);
    assert_relative_eq!(sol.psi_objective, 9.22e-3, max_relative = 1e-3);
    assert_relative_eq!(sol.harvested_power, 8.09e-3, max_relative = 1e-3);
}

#[test]
fn lone_user_gets_no_power() {
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
    assert_eq!(sol.harvested_power, 0.0);
    assert_eq!(sol.schedule.slot_power, vec![0.0]);
}

#[test]
fn newton_step_lands_on_fixed_point() {
    let inst = two_user();
    let vp = round_robin_schedule(&inst).virtual_power(2);
    let rho = SosParameters {
        mu: vec![1.0, 0.3],
        beta: vec![0.04, 0.001],
    };
    let q = newton_direction(&rho, &vp, &inst).unwrap();
    let n = rho.mu.len();
    let stepped = SosParameters {
        mu: (0..n).map(|i| rho.mu[i] + q[i]).collect(),
        beta: (0..n).map(|i| rho.beta[i] + q[n + i]).collect(),
    };
    let phi = residuals(&stepped, &vp, &inst).unwrap();
    assert!(phi.iter().all(|r| r.abs() < 1e-15), "{phi:?}");
}

#[test]
fn line_search_accepts_decrease_after_resolve() {
    let gains = generate_realization(&ChannelConfig::default(), 2, 2, &[10.0, 14.0], 3).unwrap().gains;
    let inst = ProblemInstance::new(gains, 4.0, 10.0, vec![0.0; 2], 1e-9, EhCircuitParams::reference()).unwrap();
    let rho = init_parameters(&inst).unwrap();
    let vp = round_robin_schedule(&inst).virtual_power(inst.users());
    // the starting parameters are the fixed point of the round-robin powers
    assert!(residuals(&rho, &vp, &inst).unwrap().iter().all(|r| r.abs() < 1e-15));
    // pretend the virtual powers moved to half power between evaluations
    let moved = UserSlotMatrix::from_fn(inst.users(), inst.slots(), |k, n| 0.5 * vp.get(k, n));
    let perturbed = residuals(&rho, &moved, &inst).unwrap();
    let norm_p = perturbed.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q = newton_direction(&rho, &moved, &inst).unwrap();
    let (zeta, norm) = line_search_by(norm_p, 0.01, 0.5, 30, |z| {
        let n = rho.mu.len();
        let trial = SosParameters {
            mu: (0..n).map(|i| rho.mu[i] + z * q[i]).collect(),
            beta: (0..n).map(|i| rho.beta[i] + z * q[n + i]).collect(),
        };
        let r = residuals(&trial, &moved, &inst).unwrap();
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok((norm, norm))
    })
    .unwrap();
    assert!(zeta > 0.0 && norm < norm_p);
}

#[test]
fn converged_runs_satisfy_identity() {
    for seed in 0..6 {
        let inst = common::medium_instance(seed);
        let sol = solve(&inst, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "seed {seed}");
        assert!(sol.residual_norm <= 1e-8);
        let beta_sum: f64 = sol.parameters.as_ref().unwrap().beta.iter().sum();
        assert_relative_eq!(beta_sum, sol.psi_objective, max_relative = 1e-6);
        assert!(common::tightness_problems(&inst, &sol).is_empty(), "seed {seed}");
    }
}

#[test]
fn rate_target_met_on_tiny_instances() {
    for seed in 0..40 {
        let inst = common::tiny_instance(seed);
        let Ok(sol) = solve(&inst, &SolverOptions::default()) else {
            continue;
        };
        let problems = common::tightness_problems(&inst, &sol);
        assert!(problems.is_empty(), "seed {seed}: {problems:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn never_worse_than_oracle_bound(seed in 1000u64..100_000) {
        let inst = common::tiny_instance(seed);
        let sol = solve(&inst, &SolverOptions::default());
        let orc = brute_force_oracle(&inst, common::oracle_grid(&inst).min(801));
        match (sol, orc) {
            (Ok(sol), Ok(orc)) => {
                prop_assert!(sol.psi_objective >= orc.objective - orc.lipschitz_bound);
                prop_assert!(common::tightness_problems(&inst, &sol).is_empty());
            }
            // an unreachable target must be rejected by both
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "solver {:?} vs oracle {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn psi_objective_is_scale_free_in_gains(seed in 0u64..1000, scale in 0.5f64..2.0) {
        // doubling every gain and halving both power limits leaves received powers unchanged
        let inst = common::tiny_instance(seed);
        prop_assume!(inst.c_req.iter().all(|&c| c == 0.0));
        let scaled = ProblemInstance::new(
            UserSlotMatrix::from_fn(inst.users(), inst.slots(), |k, n| inst.gains.get(k, n) * scale),
            inst.p_av / scale,
            inst.p_max / scale,
            inst.c_req.clone(),
            inst.sigma2,
            inst.circuit,
        ).unwrap();
        let a = solve(&inst, &SolverOptions::default()).unwrap();
        let b = solve(&scaled, &SolverOptions::default()).unwrap();
        prop_assert!((a.psi_objective - b.psi_objective).abs() <= 1e-7 * a.psi_objective);
    }
}
