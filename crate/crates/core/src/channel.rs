//! Channel-gain generation: free-space path loss with Rician small-scale fading.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::problem::UserSlotMatrix;
use crate::units::{db_to_linear, dbm_to_watts};

/// Propagation constant used for the carrier wavelength (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// K-factors at or above this value (dB) are treated as pure line-of-sight.
pub const LOS_CAP_DB: f64 = 60.0;

/// Link-level parameters shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_frequency_hz: f64,
    pub tx_antenna_gain_db: f64,
    pub rx_antenna_gain_db: f64,
    pub path_loss_exponent: f64,
    pub rician_factor_db: f64,
    pub reference_distance_m: f64,
    pub noise_power_w: f64,
    /// Recorded for completeness; rates are computed per hertz.
    pub bandwidth_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            carrier_frequency_hz: 915e6,
            tx_antenna_gain_db: 18.0,
            rx_antenna_gain_db: 0.0,
            path_loss_exponent: 2.0,
            rician_factor_db: 0.0,
            reference_distance_m: 10.0,
            noise_power_w: dbm_to_watts(-111.9),
            bandwidth_hz: 200e3,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("reference_distance_m", self.reference_distance_m),
            ("noise_power_w", self.noise_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.path_loss_exponent >= 1.0) {
            return Err(domain(format!(
                "path_loss_exponent must be >= 1, got {}",
                self.path_loss_exponent
            )));
        }
        for (name, v) in [
            ("tx_antenna_gain_db", self.tx_antenna_gain_db),
            ("rx_antenna_gain_db", self.rx_antenna_gain_db),
        ] {
            if !v.is_finite() {
                return Err(domain(format!("{name} must be finite")));
            }
        }
        if self.rician_factor_db.is_nan() {
            return Err(domain("rician_factor_db is NaN"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }
}

/// One draw of the `K x T` channel-gain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: UserSlotMatrix,
    pub seed: u64,
    pub user_distances: Vec<f64>,
}

/// Mean power gain at `distance`: Friis at the reference distance (with both
/// antenna gains) followed by the exponent law.
pub fn mean_path_gain(config: &ChannelConfig, distance: f64) -> Result<f64> {
    let d0 = config.reference_distance_m;
    if !(d0 > 0.0) {
        return Err(domain("reference distance must be positive"));
    }
    if !(distance >= d0) {
        return Err(domain(format!(
            "distance {distance} m is below the reference distance {d0} m"
        )));
    }
    let friis = db_to_linear(config.tx_antenna_gain_db + config.rx_antenna_gain_db)
        * (config.wavelength() / (4.0 * std::f64::consts::PI * d0)).powi(2);
    Ok(friis * (d0 / distance).powf(config.path_loss_exponent))
}

/// Unit-mean Rician power gain `|g|²` for one `(user, slot)` entry.
///
/// Every entry reads its own ChaCha8 stream so adding users or slots leaves
/// the existing entries untouched.
pub fn fading_power(rician_factor_db: f64, seed: u64, user: usize, slot: usize) -> f64 {
    if rician_factor_db >= LOS_CAP_DB {
        return 1.0;
    }
    let kr = db_to_linear(rician_factor_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((user as u64) << 32) | slot as u64);
    let x: f64 = StandardNormal.sample(&mut rng);
    let y: f64 = StandardNormal.sample(&mut rng);
    let los = (kr / (kr + 1.0)).sqrt();
    let scatter = (1.0 / (2.0 * (kr + 1.0))).sqrt();
    let re = los + scatter * x;
    let im = scatter * y;
    re * re + im * im
}

/// Draws `h_k(n) = mean_path_gain(d_k) |g_k(n)|²` for `users x slots` entries.
pub fn generate_realization(
    config: &ChannelConfig,
    users: usize,
    slots: usize,
    distances: &[f64],
    seed: u64,
) -> Result<ChannelRealization> {
    config.validate()?;
    if users == 0 || slots == 0 {
        return Err(domain("need at least one user and one slot"));
    }
    if distances.len() != users {
        return Err(Error::Dimension(format!(
            "{} distances for {users} users",
            distances.len()
        )));
    }
    let path: Vec<f64> = distances
        .iter()
        .map(|&d| mean_path_gain(config, d))
        .collect::<Result<_>>()?;
    let mut gains = UserSlotMatrix::zeros(users, slots);
    for n in 0..slots {
        for (k, pg) in path.iter().enumerate() {
            let g = fading_power(config.rician_factor_db, seed, k, n);
            // |g|² can underflow to exactly zero only with vanishing probability
            gains.set(k, n, (pg * g).max(f64::MIN_POSITIVE));
        }
    }
    Ok(ChannelRealization {
        gains,
        seed,
        user_distances: distances.to_vec(),
    })
}

/// Shannon capacity `log2(1 + p h / σ²)` in bit/s/Hz.
pub fn capacity(power: f64, gain: f64, noise_power: f64) -> f64 {
    (power * gain / noise_power).ln_1p() / std::f64::consts::LN_2
}

/// Dumps a realization as CSV rows `k,n,h` (zero-based indices).
pub fn write_realization_csv(realization: &ChannelRealization, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "k,n,h").map_err(io)?;
    let g = &realization.gains;
    for k in 0..g.users() {
        for n in 0..g.slots() {
            writeln!(out, "{k},{n},{:e}", g.get(k, n)).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
