//! Counter-based random streams.
//!
//! Every draw is keyed by `(seed, env_index, step, channel)`, so an
//! environment's randomness does not depend on how many other environments
//! exist, in what order they are stepped, or on which thread. Per-episode
//! draws put the episode counter in the step slot.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draw channels. Values are part of the reproducibility contract.
pub mod channel {
    pub const MASS: u64 = 1;
    pub const KP: u64 = 2;
    pub const COM: u64 = 3;
    pub const IMU_TILT: u64 = 4;
    pub const IMU_DISPLACEMENT: u64 = 5;
    pub const FOOT_OFFSET: u64 = 6;
    pub const TERRAIN: u64 = 7;
    pub const COMMAND: u64 = 8;
    pub const OBS_LATENCY: u64 = 9;
    pub const ACTION_LATENCY: u64 = 10;
    pub const OBS_NOISE: u64 = 11;
    pub const KICK: u64 = 12;
    pub const SMALL_KICK: u64 = 13;
    pub const POLICY: u64 = 14;
    pub const EPISODE_COMMAND: u64 = 15;
}

#[derive(Debug, Clone)]
pub struct KeyedRng {
    key: u64,
    counter: u64,
}

impl KeyedRng {
    pub fn new(seed: u64, env_index: u64, step: u64, channel: u64) -> Self {
        let key = splitmix(splitmix(splitmix(splitmix(seed) ^ env_index) ^ step) ^ channel);
        Self { key, counter: 0 }
    }

    /// Uniform on `[lo, hi]`; returns `lo` for a degenerate range.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        // Lemire's multiply-shift, with rejection for exactness
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for KeyedRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
