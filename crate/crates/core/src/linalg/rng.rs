//! Portable pseudo-random numbers for matrix generation.
//!
//! All generated test matrices must be reproducible bit-for-bit from a `u64`
//! seed, on every platform and forever. We therefore avoid external RNG
//! crates (whose streams may change between versions) and use SplitMix64
//! (Steele, Lea & Flood, 2014): a 64-bit counter incremented by the golden
//! gamma, pushed through a fixed avalanching finalizer. It is tiny, passes
//! BigCrush, and its output sequence is part of this library's contract.

/// SplitMix64 stream. `new(seed)` with the same seed always yields the same
/// sequence of `next_u64`/`next_f64`/`next_normal` values.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in the half-open interval `[0, 1)`, using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the Box–Muller transform (no rejection, so
    /// the number of `u64` draws per normal pair is fixed at two).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // Shift into (0, 1] so the logarithm is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
