//! Shared inputs for the criterion benches.

use bellcav_core::lhv::{random, ApparatusModel};
use bellcav_core::orchestrator::ExperimentConfig;
use bellcav_core::quantum::{behavior_from_state, MeasurementSettings, TwoQubitState};
use bellcav_core::BehaviorTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn singlet_behavior() -> BehaviorTable {
    behavior_from_state(&TwoQubitState::singlet(), &MeasurementSettings::default()).expect("singlet behavior")
}

/// A batch of random apparatus models with six hidden states per party.
pub fn apparatus_models(count: usize, seed: u64) -> Vec<ApparatusModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random::apparatus_model(&mut rng, 6, 6)).collect()
}

pub fn small_run(trials: u64) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        ..ExperimentConfig::default()
    }
}
