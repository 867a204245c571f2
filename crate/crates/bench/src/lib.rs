//! Seeded fixtures shared by the benchmarks.

use condnull::{generate_trial, ConfidenceVector, CounterRng, FeatureTable, StudyConfig};

/// z-values of one trial of the default study design.
pub fn trial_z(d: usize) -> Vec<f64> {
    let config = StudyConfig { k: 1, d, n_affected: d / 20, ..StudyConfig::default() };
    generate_trial(&config, 0).z
}

pub fn trial_levels(d: usize) -> ConfidenceVector {
    let z = trial_z(d);
    ConfidenceVector::from_z((0..d).map(|i| format!("f{i}")).collect(), &z)
}

/// `d` features with `reps` standard-normal replicates each.
pub fn replicate_table(d: usize, reps: usize) -> FeatureTable {
    let rng = CounterRng::new(1);
    let obs = (0..d)
        .map(|i| (0..reps).map(|r| rng.normal_at((i * reps + r) as u64)).collect())
        .collect();
    FeatureTable::new((0..d).map(|i| format!("f{i}")).collect(), obs).expect("valid table")
}
