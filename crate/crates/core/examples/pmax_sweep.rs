//! A small peak-power sweep written to CSV.
//!
//! `cargo run --release --example pmax_sweep [out.csv]`

use swipt_alloc::experiments::{read_records, run_pmax_sweep, write_records, ExperimentConfig};
use swipt_alloc::units::watts_to_dbm;

fn main() -> swipt_alloc::Result<()> {
    let config = ExperimentConfig {
        realizations: 3,
        slots: 30,
        users: vec![10],
        ..Default::default()
    };
    let records = run_pmax_sweep(&config)?;
    let out = std::env::args().nth(1).unwrap_or_else(|| "pmax_sweep.csv".into());
    write_records(&records, out.as_ref())?;
    for r in read_records(out.as_ref())? {
        println!(
            "{:<9} {:>4} dBm  {:>7.3} dBm",
            r.scheme.as_str(),
            r.value,
            watts_to_dbm(r.mean_harvested_w)
        );
    }
    println!("wrote {out}");
    Ok(())
}
