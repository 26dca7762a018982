//! Counter-based random streams.
//!
//! Every stream is keyed by `(master seed, path index, purpose)` and backed
//! by ChaCha8, so the bits a path sees never depend on which worker ran it
//! or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Noise,
    Measure,
    Probe,
    Sampler,
    InitialState,
    Custom(u64),
}

impl Purpose {
    pub fn tag(self) -> u64 {
        match self {
            Purpose::Noise => 0x6e6f_6973_6500_0001,
            Purpose::Measure => 0x6d65_6173_7572_0002,
            Purpose::Probe => 0x7072_6f62_6500_0003,
            Purpose::Sampler => 0x7361_6d70_6c00_0004,
            Purpose::InitialState => 0x696e_6974_0000_0005,
            Purpose::Custom(t) => t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path_index: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(master_seed: u64, path_index: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            path_index,
            purpose,
        }
    }

    pub fn noise(master_seed: u64, path_index: u64) -> Self {
        Self::new(master_seed, path_index, Purpose::Noise)
    }

    pub fn with_path(self, path_index: u64) -> Self {
        Self { path_index, ..self }
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.path_index.to_le_bytes());
        seed[16..24].copy_from_slice(&self.purpose.tag().to_le_bytes());
        seed[24..32].copy_from_slice(b"levysync");
        ChaCha8Rng::from_seed(seed)
    }
}
