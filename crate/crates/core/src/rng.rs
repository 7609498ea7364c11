//! Counter-based random streams.
//!
//! Every Monte Carlo draw is keyed by `(seed, purpose, index)`. The ChaCha
//! key is derived from the seed and the purpose, and the sample index selects
//! the ChaCha stream, so a sample's randomness never depends on which worker
//! evaluated it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The generator handed to sampling code.
pub type SampleRng = ChaCha12Rng;

/// Independent families of draws sharing a global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Configuration,
    AuxiliaryMarks,
    SharpNoise,
    AuxiliaryPath,
    Synthetic,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Configuration => 0x6e0c_3a41_d2f7_1001,
            Purpose::AuxiliaryMarks => 0x51a3_99e4_0b6c_2002,
            Purpose::SharpNoise => 0x2d7f_1e88_c4a5_3003,
            Purpose::AuxiliaryPath => 0x7b91_6c20_e13d_4004,
            Purpose::Synthetic => 0x13c8_f05a_9e72_5005,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root of all random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// The stream for draw `index` of the given purpose.
    pub fn stream(&self, purpose: Purpose, index: u64) -> SampleRng {
        let mut key = [0u8; 32];
        let mut state = self.seed ^ purpose.tag();
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// A derived key, used to give sub-suites their own seed space.
    pub fn child(&self, label: u64) -> StreamKey {
        StreamKey::new(splitmix64(self.seed ^ splitmix64(label)))
    }
}
