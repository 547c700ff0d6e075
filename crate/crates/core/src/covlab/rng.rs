//! Deterministic random streams for parallel Monte Carlo.
//!
//! A [`SeedSpec`] names one ChaCha8 stream: `root` keys the cipher and
//! `stream` selects the 64-bit stream id. Replications are grouped in
//! fixed-size blocks; block `b` reads the stream starting at word offset
//! `b · 2^40`, so blocks never overlap and every replication index maps to
//! the same generator state whatever the worker count.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type LabRng = ChaCha8Rng;

/// Replications per block.
pub const BLOCK_REPS: usize = 1024;

const BLOCK_WORDS_LOG2: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub const fn new(root: u64, stream: u64) -> Self {
        Self { root, stream }
    }

    /// Generator positioned at the start of the stream.
    pub fn rng(&self) -> LabRng {
        self.block_rng(0)
    }

    /// Generator positioned at the start of block `block`.
    pub fn block_rng(&self, block: u64) -> LabRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(self.stream);
        rng.set_word_pos((block as u128) << BLOCK_WORDS_LOG2);
        rng
    }

    /// An independent stream for a labelled sub-experiment.
    pub fn child(&self, label: u64) -> SeedSpec {
        SeedSpec {
            root: self.root,
            stream: splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x5bd1_e995))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `work` once per block of replications, in parallel, and returns the
/// per-block results in block order. `work` receives the block generator and
/// the replication index range it covers.
pub fn run_blocks<T, F>(reps: usize, seed: &SeedSpec, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LabRng, Range<usize>) -> T + Sync,
{
    let blocks = reps.div_ceil(BLOCK_REPS);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_REPS;
            let end = (start + BLOCK_REPS).min(reps);
            let mut rng = seed.block_rng(b as u64);
            work(&mut rng, start..end)
        })
        .collect()
}

/// Like [`run_blocks`] but concatenates per-replication outputs.
pub fn collect_reps<T, F>(reps: usize, seed: &SeedSpec, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LabRng) -> T + Sync,
{
    run_blocks(reps, seed, |rng, range| range.map(|_| draw(rng)).collect::<Vec<T>>())
        .into_iter()
        .flatten()
        .collect()
}
