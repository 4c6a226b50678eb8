//! Seed streams used by the subcommands, derived from the run seed.

pub const TRAIN: u64 = 1;
pub const TEST: u64 = 2;
pub const OOD: u64 = 3;
pub const SPLIT: u64 = 4;
pub const FEATURES: u64 = 5;
pub const SWEEP_COLUMN: u64 = 6;
pub const PATH_FIT: u64 = 7;
pub const PATH_LAMBDA_BAR: u64 = 8;
pub const PROJECTION: u64 = 9;
pub const CHECK: u64 = 10;

pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    subridge::rng::derive_seed(seed, &[stream, index])
}
