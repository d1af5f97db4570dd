//! Counter-based random streams.
//!
//! Every draw is addressed by a key: `(master_seed, env_id, edge_id)` for
//! conductances and `(master_seed, env_id, walk_id)` for walks. ChaCha8 is a
//! counter-mode generator, so a key maps to a fixed position in a fixed
//! keystream and results never depend on evaluation order or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const DOMAIN_ENVIRONMENT: u64 = 0x656e_7669_726f_6e6d;
const DOMAIN_WALK: u64 = 0x7761_6c6b_7761_6c6b;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(master_seed: u64, domain: u64, env_id: u64) -> [u8; 32] {
    let mut state = master_seed ^ domain.rotate_left(17);
    let mut seed = [0u8; 32];
    // Mix env_id in after one round so nearby ids land far apart.
    let _ = splitmix64(&mut state);
    state ^= env_id.wrapping_mul(0xd6e8_feb8_6659_fd93);
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Maps 64 random bits to a uniform double in `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random-access stream of per-edge uniforms for one environment.
#[derive(Clone)]
pub struct EdgeStream {
    rng: ChaCha8Rng,
}

impl EdgeStream {
    pub fn new(master_seed: u64, env_id: u64) -> Self {
        EdgeStream {
            rng: ChaCha8Rng::from_seed(derive_seed(master_seed, DOMAIN_ENVIRONMENT, env_id)),
        }
    }

    /// Uniform draw attached to `edge`; independent of any previous calls.
    pub fn uniform(&mut self, edge: usize) -> f64 {
        self.rng.set_word_pos(2 * edge as u128);
        unit_f64(self.rng.next_u64())
    }

    /// Uniform draws for edges `start..start + out.len()`.
    pub fn fill(&mut self, start: usize, out: &mut [f64]) {
        self.rng.set_word_pos(2 * start as u128);
        for slot in out {
            *slot = unit_f64(self.rng.next_u64());
        }
    }
}

/// Identifies one walk: its own substream of the environment's walk generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct WalkKey {
    pub master_seed: u64,
    pub env_id: u64,
    pub walk_id: u64,
}

impl WalkKey {
    pub fn new(master_seed: u64, env_id: u64, walk_id: u64) -> Self {
        WalkKey {
            master_seed,
            env_id,
            walk_id,
        }
    }

    pub fn with_walk(self, walk_id: u64) -> Self {
        WalkKey { walk_id, ..self }
    }

    pub fn stream(&self) -> WalkStream {
        let mut rng =
            ChaCha8Rng::from_seed(derive_seed(self.master_seed, DOMAIN_WALK, self.env_id));
        rng.set_stream(self.walk_id);
        WalkStream { rng }
    }
}

pub struct WalkStream {
    rng: ChaCha8Rng,
}

impl WalkStream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }
}
