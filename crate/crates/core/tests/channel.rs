use approx::assert_relative_eq;
use swipt_alloc::channel::{capacity, generate_realization, mean_path_gain, ChannelConfig};
use swipt_alloc::units::{dbm_to_watts, watts_to_dbm};

// Friis at distance d, from the textbook form.
fn friis(gt_db: f64, gr_db: f64, freq: f64, d: f64) -> f64 {
    let lambda = 3e8 / freq;
    10f64.powf((gt_db + gr_db) / 10.0) * (lambda / (4.0 * std::f64::consts::PI * d)).powi(2)
}

#[test]
fn path_gain_matches_friis() {
    let c = ChannelConfig::default();
    assert_relative_eq!(mean_path_gain(&c, 10.0).unwrap(), friis(18.0, 0.0, 915e6, 10.0), max_relative = 1e-12);
    assert_relative_eq!(mean_path_gain(&c, 10.0).unwrap(), 4.295e-4, max_relative = 1e-3);
    assert_relative_eq!(mean_path_gain(&c, 20.0).unwrap(), 1.074e-4, max_relative = 1e-3);
    let plain = ChannelConfig {
        tx_antenna_gain_db: 0.0,
        ..c
    };
    assert_relative_eq!(mean_path_gain(&plain, 10.0).unwrap(), 6.807e-6, max_relative = 1e-3);
}

#[test]
fn unit_conversions() {
    assert_relative_eq!(dbm_to_watts(46.0), 39.81, max_relative = 1e-3);
    assert_relative_eq!(dbm_to_watts(-111.9), 6.457e-15, max_relative = 1e-3);
    assert_relative_eq!(watts_to_dbm(dbm_to_watts(37.5)), 37.5, max_relative = 1e-14);
}

#[test]
fn capacity_is_shannon() {
    assert_relative_eq!(capacity(1.0, 1.0, 1.0), 1.0);
    assert_relative_eq!(capacity(3.0, 1.0, 1.0), 2.0);
    assert_eq!(capacity(0.0, 0.3, 1e-9), 0.0);
}

#[test]
fn fading_is_reproducible_and_unit_mean() {
    let c = ChannelConfig::default();
    let a = generate_realization(&c, 20, 5000, &[10.0; 20], 99).unwrap();
    let b = generate_realization(&c, 20, 5000, &[10.0; 20], 99).unwrap();
    assert_eq!(a, b);
    let pg = mean_path_gain(&c, 10.0).unwrap();
    let mean = a.gains.as_slice().iter().sum::<f64>() / (20.0 * 5000.0) / pg;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}
