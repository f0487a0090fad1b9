//! Shared inputs for the criterion benches in `benches/`.

use fedrf_core::rng::StreamRng;
use fedrf_core::Dataset;

/// Two-class data whose label depends on the first two features.
pub fn synthetic(rows: usize, features: usize, seed: u64) -> Dataset {
    let mut rng = StreamRng::new(seed, 0);
    let values: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..features).map(|_| rng.unit()).collect())
        .collect();
    let labels = values
        .iter()
        .map(|r| u32::from(r[0] + r[1] + 0.3 * rng.unit() > 1.15))
        .collect();
    Dataset::from_rows(
        (0..features).map(|i| format!("x{i}")).collect(),
        &values,
        labels,
        vec!["neg".into(), "pos".into()],
    )
    .unwrap()
}
