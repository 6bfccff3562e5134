//! Fits `(M, a, b)` to measured rectifier samples.
//!
//! Usage: `cargo run --example fit_curve [samples.csv]`. The CSV needs the
//! header `p_rf_w,p_dc_w`. Without a file, noisy samples are drawn from the
//! reference circuit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use swipt_alloc::eh_model::{dc_power_nonlinear, fit_params, read_samples, EhCircuitParams, MeasurementSample};

fn main() -> swipt_alloc::Result<()> {
    let samples = match std::env::args().nth(1) {
        Some(path) => read_samples(path.as_ref())?,
        None => {
            let truth = EhCircuitParams::reference();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let noise = Normal::new(0.0, 0.01).unwrap();
            (0..60)
                .map(|i| {
                    let p_rf = i as f64 * 1e-4;
                    let clean = dc_power_nonlinear(&truth, p_rf)?;
                    Ok(MeasurementSample {
                        p_rf,
                        p_dc: (clean * (1.0 + noise.sample(&mut rng))).max(0.0),
                    })
                })
                .collect::<swipt_alloc::Result<Vec<_>>>()?
        }
    };
    let fit = fit_params(&samples)?;
    let p = fit.params;
    println!("samples      {}", samples.len());
    println!("M            {:.6e} W", p.max_dc_power());
    println!("a            {:.6e} 1/W", p.steepness());
    println!("b            {:.6e} W", p.midpoint());
    println!("adjusted R2  {:.6}", fit.adjusted_r2);
    println!("SSE          {:.3e}", fit.sse);
    Ok(())
}
