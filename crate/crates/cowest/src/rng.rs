//! SplitMix64: the 64-bit-state generator used for toy-backend sampling and
//! retry jitter. Chosen because the whole algorithm fits in a screenful and
//! produces identical streams on any platform, so seeded runs stay
//! reproducible without depending on an external RNG crate's stability
//! guarantees.

/// SplitMix64 generator (Steele, Lea, Flood 2014). State advances by the
/// golden-gamma constant; output is the finalizer mix of the new state.
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

    /// Uniform draw in [0, 1) using the top 53 bits, the full precision of
    /// an f64 mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
