//! RF-to-DC conversion models for energy-harvesting receivers.
//!
//! The non-linear model is a logistic curve shifted so that zero input power
//! maps to zero output power:
//!
//! ```text
//! P_dc = M * (1/(1 + exp(-a (P_rf - b))) - Ω) / (1 - Ω),   Ω = 1/(1 + exp(a b))
//! ```
//!
//! `M` is the saturation output power, `a` the steepness and `b` the input
//! power at the inflexion point. [`psi`] is the unshifted logistic `M σ(a(P_rf - b))`,
//! related to [`dc_power_nonlinear`] by the affine map `E = (Ψ - MΩ)/(1 - Ω)`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Numerically stable logistic function `1/(1 + e^{-z})`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Parameters `(M, a, b)` of the logistic rectifier model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit", into = "RawCircuit")]
pub struct EhCircuitParams {
    max_dc_power: f64,
    steepness: f64,
    midpoint: f64,
    omega: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCircuit {
    max_dc_power: f64,
    steepness: f64,
    midpoint: f64,
}

impl TryFrom<RawCircuit> for EhCircuitParams {
    type Error = Error;

    fn try_from(raw: RawCircuit) -> Result<Self> {
        EhCircuitParams::new(raw.max_dc_power, raw.steepness, raw.midpoint)
    }
}

impl From<EhCircuitParams> for RawCircuit {
    fn from(p: EhCircuitParams) -> Self {
        RawCircuit {
            max_dc_power: p.max_dc_power,
            steepness: p.steepness,
            midpoint: p.midpoint,
        }
    }
}

impl EhCircuitParams {
    /// Builds the parameter set; all three values must be positive and finite.
    pub fn new(max_dc_power: f64, steepness: f64, midpoint: f64) -> Result<Self> {
        for (name, v) in [
            ("max_dc_power", max_dc_power),
            ("steepness", steepness),
            ("midpoint", midpoint),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        // Same expression as the zero-input evaluation so E(0) == 0 exactly.
        let omega = logistic(steepness * -midpoint);
        Ok(EhCircuitParams {
            max_dc_power,
            steepness,
            midpoint,
            omega,
        })
    }

    /// Rectifier used throughout the experiments: M = 20 mW, a = 1500, b = 2.2 mW.
    pub fn reference() -> Self {
        EhCircuitParams::new(0.020, 1500.0, 0.0022).expect("valid constants")
    }

    /// Saturation output power `M` in watts.
    pub fn max_dc_power(&self) -> f64 {
        self.max_dc_power
    }

    /// Steepness `a` in 1/W.
    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    /// Inflexion input power `b` in watts.
    pub fn midpoint(&self) -> f64 {
        self.midpoint
    }

    /// Zero-input offset `Ω = 1/(1 + e^{ab})`, always in `(0, 0.5)`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `1 + e^{-a(x - b)}`, the denominator of the logistic at received power `x`.
    pub fn denominator(&self, received: f64) -> f64 {
        1.0 + (-self.steepness * (received - self.midpoint)).exp()
    }

    /// Maps a logistic value `Ψ` to harvested DC power.
    pub fn harvested_from_psi(&self, psi: f64) -> f64 {
        (psi - self.max_dc_power * self.omega) / (1.0 - self.omega)
    }
}

/// One measured (input RF, output DC) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    #[serde(rename = "p_rf_w")]
    pub p_rf: f64,
    #[serde(rename = "p_dc_w")]
    pub p_dc: f64,
}

/// Ratio of output DC power to input RF power.
pub fn conversion_efficiency(p_rf: f64, p_dc: f64) -> Result<f64> {
    if !(p_rf > 0.0) {
        return Err(domain(format!("input RF power must be positive, got {p_rf}")));
    }
    if !(p_dc >= 0.0) {
        return Err(domain(format!("output DC power must be non-negative, got {p_dc}")));
    }
    Ok(p_dc / p_rf)
}

/// Linear harvesting model `P_dc = η P_rf`.
pub fn dc_power_linear(eta: f64, p_rf: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("conversion efficiency must lie in [0, 1], got {eta}")));
    }
    if !(p_rf >= 0.0) {
        return Err(domain(format!("input RF power must be non-negative, got {p_rf}")));
    }
    Ok(eta * p_rf)
}

/// Non-linear harvested power; zero at zero input and saturating at `M`.
pub fn dc_power_nonlinear(params: &EhCircuitParams, p_rf: f64) -> Result<f64> {
    if !(p_rf >= 0.0) {
        return Err(domain(format!("input RF power must be non-negative, got {p_rf}")));
    }
    Ok(harvested(params, p_rf))
}

/// Unchecked variant of [`dc_power_nonlinear`] for hot loops.
pub(crate) fn harvested(params: &EhCircuitParams, p_rf: f64) -> f64 {
    let s = logistic(params.steepness * (p_rf - params.midpoint));
    let e = params.max_dc_power * (s - params.omega) / (1.0 - params.omega);
    e.clamp(0.0, params.max_dc_power)
}

/// Standard logistic `M/(1 + e^{-a(P_rf - b)})`.
pub fn psi(params: &EhCircuitParams, p_rf: f64) -> Result<f64> {
    if !(p_rf >= 0.0) {
        return Err(domain(format!("input RF power must be non-negative, got {p_rf}")));
    }
    Ok(psi_unchecked(params, p_rf))
}

pub(crate) fn psi_unchecked(params: &EhCircuitParams, p_rf: f64) -> f64 {
    params.max_dc_power * logistic(params.steepness * (p_rf - params.midpoint))
}

/// Result of fitting the logistic model to measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: EhCircuitParams,
    pub adjusted_r2: f64,
    /// Residual sum of squares.
    pub sse: f64,
}

const FIT_MAX_ITER: usize = 200;
const FIT_GRAD_TOL: f64 = 1e-10;

/// Least-squares fit of `(M, a, b)` to measured samples.
///
/// Runs Levenberg-Marquardt in log-parameter space from a grid of starting
/// points and keeps the lowest residual. The adjusted R² is corrected for the
/// three fitted coefficients.
pub fn fit_params(samples: &[MeasurementSample]) -> Result<FitResult> {
    if samples.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 samples, got {}", samples.len())));
    }
    for s in samples {
        if !(s.p_rf >= 0.0 && s.p_dc >= 0.0) {
            return Err(domain(format!("negative or NaN sample {s:?}")));
        }
    }
    let mut xs: Vec<f64> = samples.iter().map(|s| s.p_rf).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::Fit("need at least 3 distinct input powers".into()));
    }
    let y_max = samples.iter().map(|s| s.p_dc).fold(f64::MIN, f64::max);
    let y_min = samples.iter().map(|s| s.p_dc).fold(f64::MAX, f64::min);
    if y_max == y_min {
        return Err(Error::Fit("all output powers are equal".into()));
    }
    if y_max <= 0.0 {
        return Err(Error::Fit("no positive output power".into()));
    }

    let (x_lo, x_hi) = (xs[0], xs[xs.len() - 1]);
    let span = x_hi - x_lo;
    let mut best: Option<(Vector3<f64>, f64, bool)> = None;
    let mut total_iter = 0;
    for frac in [0.1, 0.25, 0.5, 0.75] {
        let b0 = (x_lo + frac * span).max(span * 1e-3);
        for c in [1.0, 3.0, 10.0, 30.0, 100.0] {
            let a0 = c / span;
            let start = Vector3::new(y_max.ln(), a0.ln(), b0.ln());
            let (theta, cost, converged, iters) = levenberg_marquardt(samples, start);
            total_iter += iters;
            if best.as_ref().is_none_or(|(_, c, _)| cost < *c) {
                best = Some((theta, cost, converged));
            }
        }
    }
    let (theta, cost, converged) = best.expect("at least one start");
    let params = EhCircuitParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp())
        .map_err(|e| Error::Fit(format!("fit left the valid region: {e}")))?;
    let sse = 2.0 * cost;
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.p_dc).sum::<f64>() / n;
    let sst: f64 = samples.iter().map(|s| (s.p_dc - mean).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    let adjusted_r2 = 1.0 - (1.0 - r2) * (n - 1.0) / (n - 3.0);
    let result = FitResult {
        params,
        adjusted_r2,
        sse,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::FitNotConverged {
            iterations: total_iter,
            best_cost: cost,
            best: result,
        })
    }
}

/// Model value and gradient with respect to `(ln M, ln a, ln b)`.
fn model_and_grad(theta: &Vector3<f64>, x: f64) -> (f64, Vector3<f64>) {
    let (m, a, b) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let s = logistic(a * (x - b));
    let omega = logistic(-a * b);
    let scale = m / (1.0 - omega);
    let f = scale * (s - omega);
    let df_da = scale * (s * (1.0 - s) * (x - b) + (1.0 - s) * omega * b);
    let df_db = scale * a * (1.0 - s) * (omega - s);
    (f, Vector3::new(f, df_da * a, df_db * b))
}

fn cost_of(samples: &[MeasurementSample], theta: &Vector3<f64>) -> f64 {
    0.5 * samples
        .iter()
        .map(|s| (model_and_grad(theta, s.p_rf).0 - s.p_dc).powi(2))
        .sum::<f64>()
}

fn levenberg_marquardt(
    samples: &[MeasurementSample],
    mut theta: Vector3<f64>,
) -> (Vector3<f64>, f64, bool, usize) {
    let mut lambda = 1e-3;
    let mut cost = cost_of(samples, &theta);
    for iter in 0..FIT_MAX_ITER {
        let mut jtj = Matrix3::zeros();
        let mut grad = Vector3::zeros();
        for s in samples {
            let (f, j) = model_and_grad(&theta, s.p_rf);
            let r = f - s.p_dc;
            jtj += j * j.transpose();
            grad += j * r;
        }
        if grad.norm() <= FIT_GRAD_TOL {
            return (theta, cost, true, iter);
        }
        loop {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-grad)));
            if let Some(step) = step {
                let candidate = theta + step;
                let new_cost = cost_of(samples, &candidate);
                if new_cost.is_finite() && new_cost < cost {
                    let small_step = step.norm() <= 1e-14 * (1.0 + theta.norm());
                    theta = candidate;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-12);
                    if small_step {
                        return (theta, cost, true, iter + 1);
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                // no descent direction left at working precision
                return (theta, cost, grad.norm() <= 1e3 * FIT_GRAD_TOL, iter + 1);
            }
        }
    }
    (theta, cost, false, FIT_MAX_ITER)
}

/// Reads measurement samples from a CSV file with header `p_rf_w,p_dc_w`.
pub fn read_samples(path: &Path) -> Result<Vec<MeasurementSample>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["p_rf_w", "p_dc_w"] {
        return Err(Error::Config(format!(
            "{}: expected header p_rf_w,p_dc_w, found {}",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}
