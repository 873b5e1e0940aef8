//! Counter-based random streams.
//!
//! A [`CounterRng`] is a keyed hash of a running counter, so any stream can be
//! rebuilt from its key alone. The simulator keys one stream per
//! `(seed, policy, slot, purpose)` tuple; no generator state is ever shared
//! between replications or policies.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// What a stream is used for. Part of the key, so streams for different
/// purposes never coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Arrivals = 1,
    Services = 2,
    Decision = 3,
    Noise = 4,
    Probe = 5,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string; used to turn policy labels into stream ids.
pub fn label_id(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in label.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Source of uniform variates in `[0, 1)`.
pub trait UniformSource {
    fn next_f64(&mut self) -> f64;
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    tweak: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream for an arbitrary key tuple.
    pub fn keyed(words: &[u64]) -> Self {
        let mut key = 0x6A09_E667_F3BC_C908u64;
        for &w in words {
            key = mix64(key ^ w.wrapping_mul(GOLDEN).wrapping_add(0xD134_2543_DE82_EF95));
        }
        Self {
            key,
            tweak: mix64(key ^ 0xBB67_AE85_84CA_A73B),
            counter: 0,
        }
    }

    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self::keyed(&[seed, purpose as u64])
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(mix64(self.counter.wrapping_mul(GOLDEN) ^ self.key) ^ self.tweak)
    }
}

impl UniformSource for CounterRng {
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Standard normal variates by the Marsaglia polar method.
///
/// Each accepted pair `(u, v)` with `s = u^2 + v^2 in (0, 1)` yields
/// `u * sqrt(-2 ln s / s)` first and `v * sqrt(-2 ln s / s)` on the next
/// call; `u` and `v` are `2U - 1` for consecutive uniforms `U`.
#[derive(Clone, Debug)]
pub struct GaussianStream<R> {
    source: R,
    spare: Option<f64>,
}

impl<R: UniformSource> GaussianStream<R> {
    pub fn new(source: R) -> Self {
        Self { source, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.source.next_f64() - 1.0;
            let v = 2.0 * self.source.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = libm::sqrt(-2.0 * libm::log(s) / s);
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let mut a = CounterRng::keyed(&[1, 2, 3]);
        let mut b = CounterRng::keyed(&[1, 2, 3]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn key_order_matters() {
        let mut a = CounterRng::keyed(&[1, 2]);
        let mut b = CounterRng::keyed(&[2, 1]);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_moments() {
        let mut r = CounterRng::new(42, Purpose::Probe);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
            s1 += u;
            s2 += u * u;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 3.0 * (1.0f64 / 12.0 / n as f64).sqrt() + 1e-4);
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn gaussian_moments() {
        let mut g = GaussianStream::new(CounterRng::new(7, Purpose::Noise));
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = g.next_standard();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
