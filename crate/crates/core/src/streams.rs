//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream keyed by
//! `(master_seed, purpose)` and selected by a 64-bit index, usually the trial
//! number. The key is four SplitMix64 outputs seeded with
//! `master_seed ^ purpose * 0xD1B54A32D192ED03`; the index is the ChaCha
//! stream id. Trial `i` therefore sees the same bits no matter which worker
//! runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Keygen,
    Session,
    Completeness,
    Soundness,
    Privacy,
    Leakage,
    Training,
    Codebook,
    Replay,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Keygen => 1,
            Purpose::Session => 2,
            Purpose::Completeness => 3,
            Purpose::Soundness => 4,
            Purpose::Privacy => 5,
            Purpose::Leakage => 6,
            Purpose::Training => 7,
            Purpose::Codebook => 8,
            Purpose::Replay => 9,
        }
    }
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut state = master_seed ^ purpose.tag().wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
