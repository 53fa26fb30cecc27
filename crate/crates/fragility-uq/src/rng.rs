//! Seeded RNG streams.
//!
//! All randomness in the crate flows from one master seed through named
//! sub-streams, so that components (fit restarts, posterior draws,
//! bootstrap redraws, designs) can be re-seeded independently and results
//! are reproducible regardless of execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a deterministic stream from (master seed, label, index).
///
/// The label is folded with FNV-1a so distinct component names yield
/// unrelated streams; the index separates parallel draws (restart number,
/// posterior draw p, bootstrap replicate b, ...).
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&fnv1a(label.as_bytes()).to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..32].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A buffer of iid standard normal draws from a named stream.
pub fn normal_vec(master: u64, label: &str, index: u64, len: usize) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream(master, label, index);
    (0..len)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}
