//! Seeded random substreams.
//!
//! Every random draw in a run comes from a substream identified by
//! `(master_seed, purpose, step, index)`. The 256-bit ChaCha key is derived
//! from `(master_seed, purpose, step)` by a SplitMix64 sequence and `index`
//! selects the ChaCha stream, so substream `index` is always the agent index.
//! Because each (purpose, step, agent) triple owns its own generator, the
//! order in which agents are processed cannot change any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation and analysis randomness.
pub type SimRng = ChaCha8Rng;

/// What a substream is used for. The discriminant is part of the key
/// derivation and must never be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Agent initialization (`step` is always 0).
    Init = 1,
    /// One interview: partner choice, question choice and the partner's response noise.
    Interaction = 2,
    /// Evaluation-set probe taken after each step.
    Snapshot = 3,
    /// Role assignment such as target selection.
    Roles = 4,
    /// Post-hoc analysis (clustering restarts).
    Analysis = 5,
    /// Synthetic prompt embeddings.
    PromptEmbedding = 6,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds the generator for one substream.
pub fn substream(master_seed: u64, purpose: Purpose, step: u64, index: u64) -> SimRng {
    let mut state = master_seed;
    // mix purpose and step into the state before drawing key words
    state ^= splitmix64(&mut (purpose as u64).wrapping_mul(GOLDEN));
    state = state.rotate_left(17) ^ splitmix64(&mut step.wrapping_add(0x5851_f42d_4c95_7f2d));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}
