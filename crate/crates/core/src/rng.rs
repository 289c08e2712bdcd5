//! Deterministic per-replicate random streams.
//!
//! Replicate `r` of a run seeded with `seed` always draws from the same
//! ChaCha stream, whatever thread happens to execute it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Labels that keep the streams of different phases of a run apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Null,
    Alternative(u64),
    Pilot(u64),
    Folds,
    Limit,
    Field,
    Other(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Null => 0x6e75_6c6c,
            Purpose::Alternative(i) => 0x616c_7400_0000_0000 ^ i,
            Purpose::Pilot(i) => 0x7069_6c00_0000_0000 ^ i,
            Purpose::Folds => 0x666f_6c64,
            Purpose::Limit => 0x6c69_6d74,
            Purpose::Field => 0x6669_656c,
            Purpose::Other(i) => 0x6f74_6800_0000_0000 ^ i,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream used by replicate `replicate` of phase `purpose`.
pub fn replicate_rng(seed: u64, purpose: Purpose, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose.tag())));
    rng.set_stream(replicate);
    rng
}

/// Fills `out` with a uniformly distributed unit vector.
pub fn uniform_unit<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm2 += *v * *v;
        }
        if norm2 > 1e-300 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}
