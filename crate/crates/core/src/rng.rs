//! Counter-based seedable random streams.
//!
//! A stream is a SplitMix64 output sequence whose key is derived from a
//! user seed plus a list of sub-stream ids. Independent tasks (grid
//! points, ensemble replications) derive their own stream from their
//! index, so draws never depend on scheduling order and every result is
//! reproducible from the top-level seed alone.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    ctr: u64,
    spare_normal: Option<f64>,
}

impl Stream {
    /// Stream keyed by `seed` and a path of sub-stream ids.
    pub fn new(seed: u64, ids: &[u64]) -> Self {
        let mut key = mix(seed ^ GOLDEN);
        for (i, &id) in ids.iter().enumerate() {
            key = mix(key ^ mix(id.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
        }
        Stream { key, ctr: 0, spare_normal: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)));
        self.ctr = self.ctr.wrapping_add(1);
        out
    }

    /// Uniform on the open interval (0, 1); never returns 0 or 1.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller; the second draw of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform();
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Chi-square with integer degrees of freedom (sum of squared normals).
    pub fn chi_square(&mut self, df: u32) -> f64 {
        (0..df)
            .map(|_| {
                let z = self.normal();
                z * z
            })
            .sum()
    }

    /// Student t with integer degrees of freedom.
    pub fn student_t(&mut self, df: u32) -> f64 {
        self.normal() / (self.chi_square(df) / df as f64).sqrt()
    }
}
