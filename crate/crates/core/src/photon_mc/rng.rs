use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Key for one independent random stream.
///
/// Streams come from ChaCha8 (`rand_chacha` 0.9): the 256-bit key is
/// `master_seed` in little-endian byte order followed by 24 zero bytes, the
/// 64-bit ChaCha stream number is `stream_id`, and the word position starts
/// at 0. Distinct `(master_seed, stream_id)` pairs therefore select distinct
/// keystreams, and the mapping does not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec { master_seed, stream_id }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        SeedSpec { stream_id, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}
