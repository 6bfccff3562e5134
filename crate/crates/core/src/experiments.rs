//! Monte-Carlo sweeps of the average harvested power for the proposed and
//! baseline schemes.
//!
//! Realization `r` of a run uses a channel seed derived from the base seed
//! and `r` only, so every sweep point and user count sees the same fading
//! draws (and the larger user set extends the smaller one).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{solve_linear_baseline, BaselineOptions};
use crate::channel::{generate_realization, ChannelConfig};
use crate::eh_model::EhCircuitParams;
use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, UserSlotMatrix};
use crate::solver::{solve, SolverOptions};
use crate::units::dbm_to_watts;

/// Share of failed realizations above which a sweep is aborted.
pub const MAX_FLAGGED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Baseline,
    Proposed,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Distance,
    Pmax,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Distance => "distance",
            SweepKind::Pmax => "pmax",
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(SweepKind::Distance),
            "pmax" => Ok(SweepKind::Pmax),
            other => Err(Error::Config(format!("unknown sweep {other:?}"))),
        }
    }
}

/// Experiment settings, read from TOML. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub realizations: usize,
    /// User counts `K`, one curve each.
    pub users: Vec<usize>,
    /// Slots `T` per realization.
    pub slots: usize,
    /// Distances for the distance sweep (m).
    pub distances_m: Vec<f64>,
    /// Peak powers for the P_max sweep (dBm).
    pub pmax_dbm: Vec<f64>,
    /// Peak power held fixed during the distance sweep (dBm).
    pub distance_sweep_pmax_dbm: f64,
    /// Distance held fixed during the P_max sweep (m).
    pub pmax_sweep_distance_m: f64,
    /// `P_av = pav_ratio · P_max`.
    pub pav_ratio: f64,
    /// Rate target of the first user (bit/s/Hz); the others have none.
    pub first_user_rate: f64,
    /// Linear efficiency reported for the baseline design.
    pub baseline_eta: f64,
    pub channel: ChannelConfig,
    pub circuit: EhCircuitParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base_seed: 2024,
            realizations: 50,
            users: vec![10, 15],
            slots: 100,
            distances_m: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            pmax_dbm: vec![36.0, 38.0, 40.0, 42.0, 44.0, 46.0],
            distance_sweep_pmax_dbm: 46.0,
            pmax_sweep_distance_m: 10.0,
            pav_ratio: 0.2,
            first_user_rate: 0.5,
            baseline_eta: 0.5,
            channel: ChannelConfig::default(),
            circuit: EhCircuitParams::reference(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.slots == 0 {
            return bad("slots must be at least 1".into());
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return bad("users must list positive user counts".into());
        }
        for (name, sweep) in [("distances_m", &self.distances_m), ("pmax_dbm", &self.pmax_dbm)] {
            if sweep.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if sweep.iter().any(|v| !v.is_finite()) || sweep.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("{name} must be finite and strictly increasing"));
            }
        }
        if !(self.pav_ratio > 0.0 && self.pav_ratio <= 1.0) {
            return bad(format!("pav_ratio must lie in (0, 1], got {}", self.pav_ratio));
        }
        if !(self.first_user_rate >= 0.0 && self.first_user_rate.is_finite()) {
            return bad("first_user_rate must be non-negative".into());
        }
        if !(self.baseline_eta > 0.0 && self.baseline_eta <= 1.0) {
            return bad("baseline_eta must lie in (0, 1]".into());
        }
        self.channel.validate()
    }

    /// Channel seed of realization `r`.
    pub fn realization_seed(&self, r: usize) -> u64 {
        // SplitMix64 finalizer over (base, r)
        let mut z = self
            .base_seed
            .wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Problem instance for one realization at a given distance and peak power.
    pub fn instance(&self, users: usize, distance_m: f64, p_max_dbm: f64, r: usize) -> Result<ProblemInstance> {
        let realization = generate_realization(
            &self.channel,
            users,
            self.slots,
            &vec![distance_m; users],
            self.realization_seed(r),
        )?;
        let p_max = dbm_to_watts(p_max_dbm);
        let mut c_req = vec![0.0; users];
        c_req[0] = self.first_user_rate;
        ProblemInstance::new(
            realization.gains,
            self.pav_ratio * p_max,
            p_max,
            c_req,
            self.channel.noise_power_w,
            self.circuit,
        )
    }
}

/// Averaged result of one scheme at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub scheme: Scheme,
    pub sweep: SweepKind,
    pub value: f64,
    pub users: usize,
    pub mean_harvested_w: f64,
    pub stderr_w: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Realizations left out of the mean because the solver failed or did
    /// not converge. Not written to CSV.
    pub flagged: usize,
}

/// Harvested power per scheme, or the reason the realization was flagged.
type Outcome = std::result::Result<[f64; 2], String>;

fn solve_realization(config: &ExperimentConfig, instance: &ProblemInstance) -> Outcome {
    let proposed = solve(instance, &SolverOptions::default()).map_err(|e| e.to_string())?;
    if !proposed.converged {
        return Err(format!(
            "not converged after {} iterations (residual {:e})",
            proposed.iterations, proposed.residual_norm
        ));
    }
    let baseline = solve_linear_baseline(
        instance,
        &BaselineOptions {
            eta: config.baseline_eta,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok([baseline.harvested_power, proposed.harvested_power])
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn run_sweep(config: &ExperimentConfig, sweep: SweepKind) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let points: Vec<(f64, f64, f64)> = match sweep {
        SweepKind::Distance => config
            .distances_m
            .iter()
            .map(|&d| (d, d, config.distance_sweep_pmax_dbm))
            .collect(),
        SweepKind::Pmax => config
            .pmax_dbm
            .iter()
            .map(|&p| (p, config.pmax_sweep_distance_m, p))
            .collect(),
    };
    let mut jobs = Vec::new();
    for &(value, distance, pmax) in &points {
        for &k in &config.users {
            for r in 0..config.realizations {
                jobs.push((value, distance, pmax, k, r));
            }
        }
    }
    // instances are built up front so configuration errors surface as errors
    let instances: Vec<ProblemInstance> = jobs
        .iter()
        .map(|&(_, d, p, k, r)| config.instance(k, d, p, r))
        .collect::<Result<_>>()?;
    let outcomes: Vec<Outcome> = instances
        .par_iter()
        .map(|inst| solve_realization(config, inst))
        .collect();

    let flagged_total = outcomes.iter().filter(|o| o.is_err()).count();
    if flagged_total as f64 > MAX_FLAGGED_SHARE * outcomes.len() as f64 {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err())
            .cloned()
            .unwrap_or_default();
        return Err(Error::Config(format!(
            "{flagged_total} of {} realizations failed (first: {first})",
            outcomes.len()
        )));
    }

    let mut records = Vec::new();
    let per_point = config.realizations;
    for (chunk_jobs, chunk) in jobs.chunks(per_point).zip(outcomes.chunks(per_point)) {
        let (value, _, _, k, _) = chunk_jobs[0];
        let flagged = chunk.iter().filter(|o| o.is_err()).count();
        for scheme in [Scheme::Baseline, Scheme::Proposed] {
            let idx = scheme as usize;
            let values: Vec<f64> = chunk.iter().filter_map(|o| o.as_ref().ok()).map(|v| v[idx]).collect();
            let (mean, stderr) = mean_stderr(&values);
            records.push(ExperimentRecord {
                scheme,
                sweep,
                value,
                users: k,
                mean_harvested_w: mean,
                stderr_w: stderr,
                realizations: config.realizations,
                seed: config.base_seed,
                flagged,
            });
        }
    }
    sort_records(&mut records);
    Ok(records)
}

/// Harvested power versus user distance at fixed peak power.
pub fn run_distance_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    run_sweep(config, SweepKind::Distance)
}

/// Harvested power versus peak power at fixed distance, with `P_av`
/// scaled along.
pub fn run_pmax_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    run_sweep(config, SweepKind::Pmax)
}

pub fn run(config: &ExperimentConfig, sweep: SweepKind) -> Result<Vec<ExperimentRecord>> {
    run_sweep(config, sweep)
}

fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        (a.scheme, a.sweep)
            .cmp(&(b.scheme, b.sweep))
            .then(a.value.total_cmp(&b.value))
            .then(a.users.cmp(&b.users))
    });
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scheme: Scheme,
    sweep: SweepKind,
    value: f64,
    #[serde(rename = "K")]
    users: usize,
    mean_harvested_w: f64,
    stderr_w: f64,
    realizations: usize,
    seed: u64,
}

/// Writes records as CSV sorted by `(scheme, sweep, value, K)`.
pub fn write_records(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record([
        "scheme",
        "sweep",
        "value",
        "K",
        "mean_harvested_w",
        "stderr_w",
        "realizations",
        "seed",
    ])
    .map_err(csv_err)?;
    for r in &sorted {
        w.serialize(CsvRow {
            scheme: r.scheme,
            sweep: r.sweep,
            value: r.value,
            users: r.users,
            mean_harvested_w: r.mean_harvested_w,
            stderr_w: r.stderr_w,
            realizations: r.realizations,
            seed: r.seed,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(ExperimentRecord {
                scheme: row.scheme,
                sweep: row.sweep,
                value: row.value,
                users: row.users,
                mean_harvested_w: row.mean_harvested_w,
                stderr_w: row.stderr_w,
                realizations: row.realizations,
                seed: row.seed,
                flagged: 0,
            })
        })
        .collect()
}

/// Small helper for examples and tests: one instance with explicit gains.
pub fn instance_from_gains(config: &ExperimentConfig, gains: UserSlotMatrix, p_max_dbm: f64) -> Result<ProblemInstance> {
    let p_max = dbm_to_watts(p_max_dbm);
    let mut c_req = vec![0.0; gains.users()];
    c_req[0] = config.first_user_rate;
    ProblemInstance::new(
        gains,
        config.pav_ratio * p_max,
        p_max,
        c_req,
        config.channel.noise_power_w,
        config.circuit,
    )
}
