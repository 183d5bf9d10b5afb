//! Seed derivation. Every stochastic component owns its own ChaCha stream
//! derived from one global seed, so adding draws in one component never
//! shifts the sequence of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Draws = 2,
    Zeta = 3,
    Adapter = 4,
    Holdout = 5,
    Fixture = 6,
    Probe = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Sub-stream for the `index`-th instance of a component (e.g. one run in a sweep).
pub fn substream(seed: u64, which: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    rng.set_stream(which as u64);
    rng
}

pub fn standard_normal_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    use rand::Rng as _;
    (0..len).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}
