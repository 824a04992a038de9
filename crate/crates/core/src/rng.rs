//! Deterministic counter-based random streams.
//!
//! Every stochastic stage of the pipeline (correspondence sampling, RANSAC,
//! scene generation, noise injection) draws from a [`DetRng`] keyed by a user
//! seed and a purpose tag. Streams for different purposes are independent, and
//! the n-th draw of a stream is a pure function of `(seed, tag, n)`, so results
//! are bit-reproducible across runs and platforms.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Derives a decorrelated seed for a sub-task, e.g. one per frame pair.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index.wrapping_add(GAMMA)))
}

/// Counter-based pseudo-random stream.
#[derive(Debug, Clone)]
pub struct DetRng {
    key: u64,
    counter: u64,
}

impl DetRng {
    /// Opens the stream identified by `(seed, tag)`.
    pub fn new(seed: u64, tag: &str) -> Self {
        Self {
            key: mix(seed ^ fnv1a(tag.as_bytes())),
            counter: 0,
        }
    }

    /// Derives an independent child stream, e.g. one per frame pair.
    pub fn child(&self, index: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(index.wrapping_add(GAMMA))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        let n = n as u64;
        // rejection keeps the distribution exactly uniform
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal deviate (Box-Muller, cosine branch).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Draws `k` distinct indices out of `[0, n)`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct of {n}");
        if k <= 16 {
            // rejection on a tiny buffer beats shuffling the full range
            let mut out = Vec::with_capacity(k);
            while out.len() < k {
                let idx = self.below(n);
                if !out.contains(&idx) {
                    out.push(idx);
                }
            }
            out
        } else {
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + self.below(n - i);
                pool.swap(i, j);
            }
            pool.truncate(k);
            pool
        }
    }
}
