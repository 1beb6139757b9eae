//! Deterministic counter-based random streams.
//!
//! Every stochastic component in this crate draws from an [`RngStream`]
//! seeded by mixing a global seed with stable identifiers (scene id hash,
//! tile index, detector tier, epoch, ...). Two streams derived from the
//! same tags always produce the same draws, independently of any other
//! stream, which is what makes whole training and evaluation runs
//! reproducible bit for bit.

use crate::math;
use core::f64::consts::PI;

/// SplitMix64 finalizer. Bijective, so distinct inputs stay distinct.
#[inline]
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over UTF-8 bytes; used to fold string ids into stream tags.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A small deterministic PRNG (SplitMix64 sequence).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { state: seed }
    }

    /// Derives an independent stream from a seed and a list of tags.
    /// Absorption order matters: `[a, b]` and `[b, a]` differ.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut s = mix(seed);
        for (i, t) in tags.iter().enumerate() {
            s = mix(s ^ mix(t.wrapping_add(i as u64 + 1)));
        }
        RngStream { state: s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix(self.state)
    }

    /// Uniform in [0, 1), with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Log-uniform in [lo, hi]; requires 0 < lo <= hi.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        math::exp(self.uniform(math::ln(lo), math::ln(hi)))
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn uniform_incl(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        lo + self.next_u64() % span
    }

    /// Standard normal via Box-Muller. Consumes two uniforms per draw and
    /// keeps no cache so stream positions stay easy to reason about.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = (self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * PI * u2)
    }

    /// Normal(0, sigma) clamped to two standard deviations. Detector jitter
    /// uses this so a bounded location error can be guaranteed.
    pub fn gaussian_clamped(&mut self, sigma: f64) -> f64 {
        let z = self.gaussian().clamp(-2.0, 2.0);
        z * sigma
    }

    /// Poisson draw by Knuth's product method; fine for the small rates
    /// used here (cluster counts, false-positive counts).
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0);
        if lambda == 0.0 {
            return 0;
        }
        let limit = math::exp(-lambda);
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.next_f64();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        if items.len() < 2 {
            return;
        }
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
