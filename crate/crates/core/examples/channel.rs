//! Mean path gain against distance, and one fading realization.
//!
//! `cargo run --example channel [out.csv]` also dumps the gains as `k,n,h`.

use swipt_alloc::channel::{generate_realization, mean_path_gain, write_realization_csv, ChannelConfig};
use swipt_alloc::units::linear_to_db;

fn main() -> swipt_alloc::Result<()> {
    let config = ChannelConfig::default();
    for d in [10.0, 15.0, 20.0, 25.0, 30.0] {
        let g = mean_path_gain(&config, d)?;
        println!("{d:>4} m  {:>8.2} dB", linear_to_db(g));
    }

    let realization = generate_realization(&config, 4, 8, &[10.0, 15.0, 20.0, 25.0], 7)?;
    for k in 0..4 {
        let row: Vec<String> = (0..8)
            .map(|n| format!("{:7.2}", linear_to_db(realization.gains.get(k, n))))
            .collect();
        println!("user {k}: {}", row.join(" "));
    }
    if let Some(path) = std::env::args().nth(1) {
        write_realization_csv(&realization, path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
