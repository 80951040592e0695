//! Seed derivation.
//!
//! Every experiment takes one 64-bit root seed. Child seeds are derived by
//! hashing a label (FNV-1a) and an index into the parent and finishing with
//! SplitMix64, so each stage and each parallel task owns an independent
//! stream and no generator state is ever shared.
//!
//! `Seed(s).child("fiber").index(3)` always names the same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl Seed {
    pub fn child(self, label: &str) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(fnv1a(label))))
    }

    pub fn index(self, i: u64) -> Seed {
        Seed(splitmix64(
            self.0.wrapping_add(splitmix64(i.wrapping_add(1))),
        ))
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(s: u64) -> Self {
        Seed(s)
    }
}
