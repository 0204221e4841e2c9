//! Named random sub-streams derived from one master seed.
//!
//! Every consumer of randomness (parameter init, shuffling, channel draws,
//! noise, evaluation) asks for its own stream by label plus an index path,
//! so changing how often one component draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha12Rng;

pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const CHANNEL: &str = "channel";
pub const NOISE: &str = "noise";
pub const TRAIN_SNR: &str = "train-snr";
pub const PRECODER: &str = "precoder";
pub const EVAL: &str = "eval";

/// Deterministic generator for `(master, label, path)`.
pub fn substream(master: u64, label: &str, path: &[u64]) -> Rng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let seed: [u8; 32] = h.finalize().into();
    Rng::from_seed(seed)
}
