//! Counter-based pseudorandom numbers for reproducible synthetic data.
//!
//! The generator is fully specified so fixtures can be regenerated in any
//! language:
//!
//! * `mix(z)` is the SplitMix64 finalizer:
//!   `z ^= z >> 30; z *= 0xbf58476d1ce4e5b9; z ^= z >> 27; z *= 0x94d049bb133111eb; z ^= z >> 31`
//!   (wrapping 64-bit arithmetic).
//! * key = `mix(seed ^ mix(stream + G))` with `G = 0x9e3779b97f4a7c15`.
//! * the n-th raw output (n = 0, 1, …) is `mix(key + n·G)`.
//! * uniforms are `(raw >> 11)·2⁻⁵³` in [0, 1).
//! * normals use Box–Muller on two consecutive uniforms `u₁, u₂`:
//!   `sqrt(−2 ln(1 − u₁))·cos(2π u₂)`; the sine branch is discarded.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix(seed ^ mix(stream.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn log_uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stream_is_frozen() {
        // Guards the documented algorithm against accidental edits.
        let mut r = CounterRng::new(0, 0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = CounterRng::new(0, 0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        let key = mix(0 ^ mix(GOLDEN));
        assert_eq!(first[0], mix(key));
        assert_eq!(first[2], mix(key.wrapping_add(2u64.wrapping_mul(GOLDEN))));
    }

    #[test]
    fn streams_differ() {
        let a = CounterRng::new(7, 0).next_u64();
        let b = CounterRng::new(7, 1).next_u64();
        let c = CounterRng::new(8, 0).next_u64();
        assert!(a != b && a != c);
    }

    #[test]
    fn normal_moments() {
        let mut r = CounterRng::new(42, 3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn uniform_range() {
        let mut r = CounterRng::new(1, 1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
