//! Deterministic, portable random number generation.
//!
//! Every stochastic component of the crate draws from one of two generators
//! implemented here, so that a run is reproducible bit-for-bit on any
//! platform from a single master seed:
//!
//! - `SplitMix64` (Steele, Lea & Flood, 2014): a 64-bit mixing generator used
//!   to expand seeds into generator state.
//! - `Xoshiro256StarStar` (Blackman & Vigna, 2018): the stream generator used
//!   for all sampling.
//!
//! Independent consumers derive their own streams with [`derive_stream`]:
//! the consumer tag is hashed with 64-bit FNV-1a, xor-combined with the
//! master seed, and expanded through SplitMix64 into xoshiro state. Two
//! consumers with different tags therefore never share a sequence.

/// SplitMix64 seed expander.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256** stream generator.
#[derive(Debug, Clone)]
pub struct Xoshiro256StarStar {
    s: [u64; 4],
}

impl Xoshiro256StarStar {
    /// Expands a 64-bit seed into the 256-bit state through SplitMix64, as
    /// recommended by the xoshiro authors.
    pub fn seed_from(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let mut s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        if s == [0, 0, 0, 0] {
            s[0] = 1; // the all-zero state is a fixed point
        }
        Self { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): the top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and
    /// discards the sine branch; wasteful, but stateless across calls.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, n). Uses the modulo reduction; the bias of
    /// n/2^64 is irrelevant at the sample counts used here.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (self.next_u64() % n as u64) as usize
    }

    /// The first `k` entries of a Fisher-Yates shuffle of 0..n, i.e. a
    /// uniform draw of k distinct indices.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} distinct from {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// Derives an independent stream for a named consumer of the master seed.
pub fn derive_stream(master_seed: u64, tag: &str) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from(master_seed ^ fnv1a(tag))
}

/// Derives a plain 64-bit sub-seed for a named consumer.
pub fn derive_seed(master_seed: u64, tag: &str) -> u64 {
    derive_stream(master_seed, tag).next_u64()
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
