//! Deterministic random number generation.
//!
//! The generator is xoshiro256++ seeded through SplitMix64, both fully
//! specified here so that a reimplementation in any language reproduces
//! the byte-identical sample stream from the same 64-bit seed:
//!
//! * SplitMix64: state += 0x9E3779B97F4A7C15; z = state;
//!   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!   output z ^ (z >> 31). The four xoshiro words are the first four
//!   SplitMix64 outputs.
//! * xoshiro256++: output = rotl(s0 + s3, 23) + s0; then
//!   t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t;
//!   s3 = rotl(s3, 45).
//! * `next_f64` takes the top 53 bits of `next_u64` and scales by 2^-53,
//!   yielding a uniform double in [0, 1).

#[derive(Debug, Clone)]
pub struct Rng {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        Rng {
            state: [
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
            ],
        }
    }

    /// Fold a label into a seed so independent parameter groups draw from
    /// independent streams: `derive(seed, label)` is SplitMix64 applied to
    /// seed XOR FNV-1a(label).
    pub fn derive(seed: u64, label: &str) -> Self {
        let mut s = seed ^ fnv1a64(label.as_bytes());
        let folded = splitmix64(&mut s);
        Rng::new(folded)
    }

    pub fn next_u64(&mut self) -> u64 {
        let [s0, s1, s2, s3] = self.state;
        let result = s0.wrapping_add(s3).rotate_left(23).wrapping_add(s0);
        let t = s1 << 17;
        let mut n = [s0, s1, s2, s3];
        n[2] ^= n[0];
        n[3] ^= n[1];
        n[1] ^= n[2];
        n[0] ^= n[3];
        n[2] ^= t;
        n[3] = n[3].rotate_left(45);
        self.state = n;
        result
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform double in [-a, a).
    pub fn uniform_symmetric(&mut self, a: f64) -> f64 {
        self.uniform(-a, a)
    }
}

/// 64-bit FNV-1a: offset basis 14695981039346656037, prime 1099511628211.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF29CE484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001B3);
    }
    hash
}
