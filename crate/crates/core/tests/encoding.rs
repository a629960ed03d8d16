use pigan_core::encoding::{estimate_sensitivities_acs, forward_encode, make_mask};
use pigan_core::phantoms::{Dataset, DatasetConfig, Domain, SplitCounts};

/// RMSE of `|S_est| − |S_true|` over the object support, all coils.
fn acs_map_rmse(acs: usize) -> f64 {
    let ds = Dataset::generate(&DatasetConfig {
        domain: Domain::Brainlike,
        counts: SplitCounts {
            train: 1,
            val: 0,
            test: 0,
        },
        size: 64,
        coils: 4,
        base_seed: 0,
    })
    .unwrap();
    let s = &ds.train[0];
    let mask = make_mask(64, 64, 2.0, acs, 0).unwrap();
    let y = forward_encode(&s.image, &s.sensitivities, &mask, 0.0, 0).unwrap();
    let est = estimate_sensitivities_acs(&y).unwrap();
    let support = s.image.magnitude();
    let (mut acc, mut n) = (0.0, 0usize);
    for (a, b) in est.magnitudes().iter().zip(s.sensitivities.magnitudes()) {
        for i in 0..support.len() {
            if support.data()[i] > 0.0 {
                acc += (a.data()[i] - b.data()[i]).powi(2);
                n += 1;
            }
        }
    }
    (acc / n as f64).sqrt()
}

#[test]
fn acs24_map_error_regression() {
    const FROZEN: f64 = 1.121_020_412_598_569_4e-2;
    let rmse = acs_map_rmse(24);
    assert!((rmse - FROZEN).abs() <= 1e-12 * FROZEN, "{rmse:.17e}");
    assert!(acs_map_rmse(8) > rmse);
}
