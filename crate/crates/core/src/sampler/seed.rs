use sha2::{Digest, Sha256};

/// Stable 64-bit seed derivation: SHA-256 over the global seed and a sequence
/// of length-prefixed fields, truncated to the first 8 bytes (little endian).
///
/// Independent of platform, thread count, and crate version of `rand`, so
/// every trial can reconstruct its own RNG without coordination.
#[derive(Clone)]
pub struct SeedDeriver(Sha256);

impl SeedDeriver {
    pub fn new(global_seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"prefinetune-seed-v1");
        h.update(global_seed.to_le_bytes());
        SeedDeriver(h)
    }

    pub fn str(mut self, s: &str) -> Self {
        self.0.update(b"s");
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update(b"u");
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn finish(self) -> u64 {
        let digest = self.0.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Seed of one downstream trial:
/// hash(global_seed, config_id, speaker, emotion, k, trial_index).
pub fn trial_seed(global_seed: u64, config_id: usize, speaker: &str, emotion: &str, k: usize, trial_index: usize) -> u64 {
    SeedDeriver::new(global_seed)
        .str("trial")
        .u64(config_id as u64)
        .str(speaker)
        .str(emotion)
        .u64(k as u64)
        .u64(trial_index as u64)
        .finish()
}

/// Short lowercase hex digest used for config and plan hashes.
pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
