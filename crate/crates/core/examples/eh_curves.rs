//! Harvested DC power under the linear and logistic models over a range of
//! received powers.

use swipt_alloc::eh_model::{dc_power_linear, dc_power_nonlinear, EhCircuitParams};

fn main() -> swipt_alloc::Result<()> {
    let circuit = EhCircuitParams::reference();
    println!("{:>10} {:>12} {:>12}", "P_rf (mW)", "linear (mW)", "logistic (mW)");
    for i in 0..=20 {
        let p_rf = i as f64 * 0.5e-3;
        println!(
            "{:>10.2} {:>12.4} {:>12.4}",
            p_rf * 1e3,
            dc_power_linear(0.5, p_rf)? * 1e3,
            dc_power_nonlinear(&circuit, p_rf)? * 1e3
        );
    }
    println!("saturation M = {} mW", circuit.max_dc_power() * 1e3);
    Ok(())
}
