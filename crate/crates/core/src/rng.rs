//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, counter)`, so any element of a
//! simulation can be regenerated in isolation and output never depends on
//! how work is split across threads.

use crate::math;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Key a stream on a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

/// Logical address of one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawKey {
    /// Path (or sample) index.
    pub stream: u64,
    /// Time step / bridge node index.
    pub index: u32,
    /// Vector component.
    pub component: u16,
    /// Disambiguates independent uses of the same `(stream, index, component)`.
    pub tag: u16,
}

impl DrawKey {
    pub fn new(stream: u64, index: u32, component: u16, tag: u16) -> Self {
        Self { stream, index, component, tag }
    }
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: [seed as u32, (seed >> 32) as u32] }
    }

    #[inline]
    pub fn block(&self, at: DrawKey) -> [u32; 4] {
        let ctr =
            [at.index, (at.component as u32) | ((at.tag as u32) << 16), at.stream as u32, (at.stream >> 32) as u32];
        philox4x32(ctr, self.key)
    }

    /// Two uniforms: the first in (0, 1], the second in [0, 1).
    #[inline]
    pub fn uniform_pair(&self, at: DrawKey) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let o = self.block(at);
        let a = (((o[0] as u64) << 32) | o[1] as u64) >> 11;
        let b = (((o[2] as u64) << 32) | o[3] as u64) >> 11;
        ((a + 1) as f64 * SCALE, b as f64 * SCALE)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&self, at: DrawKey) -> f64 {
        self.uniform_pair(at).1
    }

    /// Standard normal via Box-Muller (cosine branch only).
    #[inline]
    pub fn normal(&self, at: DrawKey) -> f64 {
        let (u1, u2) = self.uniform_pair(at);
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
    }
}
