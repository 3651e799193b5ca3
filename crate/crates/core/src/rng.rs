//! Seedable, splittable random streams.
//!
//! Every random draw in a simulation comes from a ChaCha8 keystream keyed by
//! the 64-bit run seed (expanded with `SeedableRng::seed_from_u64`). A
//! substream is addressed by `(purpose, day, slot)`:
//!
//! * the ChaCha stream id is `purpose << 48 | day`;
//! * the starting word position is `slot << 16`, giving every slot 65,536
//!   32-bit words (32,768 doubles) before it could run into its neighbour.
//!
//! Day `t`'s draws for donor `i` therefore depend on `(seed, t, i)` only, not
//! on how many other donors exist or what happened on earlier days. That is
//! what makes sweeps sharing a seed variance-paired.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SLOT_STRIDE_BITS: u32 = 16;
const PURPOSE_SHIFT: u32 = 48;

/// What a substream is used for. Each purpose owns a disjoint stream range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Supply = 1,
    Demand = 2,
    Clustering = 3,
    Participation = 4,
    Synthetic = 5,
}

#[derive(Debug, Clone)]
pub struct Substreams {
    seed: u64,
    key: ChaCha8Rng,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            key: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, day: u64, slot: u64) -> ChaCha8Rng {
        debug_assert!(day < (1 << PURPOSE_SHIFT));
        let mut rng = self.key.clone();
        rng.set_stream(((purpose as u64) << PURPOSE_SHIFT) | day);
        rng.set_word_pos(u128::from(slot) << SLOT_STRIDE_BITS);
        rng
    }

    /// Stream for donor `donor`'s supply draws on `day`.
    pub fn supply(&self, day: u64, donor: u64) -> ChaCha8Rng {
        self.stream(Purpose::Supply, day, donor)
    }

    pub fn demand(&self, day: u64) -> ChaCha8Rng {
        self.stream(Purpose::Demand, day, 0)
    }

    pub fn clustering(&self) -> ChaCha8Rng {
        self.stream(Purpose::Clustering, 0, 0)
    }

    pub fn participation(&self) -> ChaCha8Rng {
        self.stream(Purpose::Participation, 0, 0)
    }
}
