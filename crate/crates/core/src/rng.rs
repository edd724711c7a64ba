//! Splittable splitmix64 streams.
//!
//! A stream is identified by a base seed plus a sequence of 64-bit labels,
//! so every experiment can derive its own generator without depending on
//! the order in which experiments are scheduled.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One splitmix64 step applied to `x` as a fresh state.
#[inline]
pub fn mix(x: u64) -> u64 {
    finalize(x.wrapping_add(GOLDEN))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    state: u64,
    origin: Vec<u64>,
}

/// Builds the stream for `base_seed` folded with `labels` in order.
pub fn derive_stream(base_seed: u64, labels: &[u64]) -> RandomStream {
    labels.iter().fold(RandomStream::new(base_seed), |s, &l| s.fold(l))
}

impl RandomStream {
    pub fn new(base_seed: u64) -> Self {
        Self { state: mix(base_seed), origin: Vec::new() }
    }

    /// Child stream keyed by `label`. Does not advance `self`.
    pub fn fold(&self, label: u64) -> Self {
        let mut origin = self.origin.clone();
        origin.push(label);
        Self { state: mix(self.state ^ mix(label)), origin }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Labels folded into this stream since its base seed.
    pub fn origin(&self) -> &[u64] {
        &self.origin
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        finalize(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; Lemire's multiply-shift with rejection.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal draw via Box-Muller, in f64.
    pub fn standard_normal(&mut self) -> f64 {
        // 1 - [0,1) keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// `N(mean, std)` draw rounded to binary32.
    pub fn gaussian_f32(&mut self, mean: f32, std: f32) -> f32 {
        (mean as f64 + std as f64 * self.standard_normal()) as f32
    }

    /// Uniform sample of `k` distinct positions out of `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
