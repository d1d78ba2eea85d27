//! Value-noise textures in surface coordinates.

/// Three-octave value noise mapped into `[lo, hi]`, one independent field per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    /// Lattice cells per meter of the base octave.
    pub frequency: f64,
}

const OCTAVES: u32 = 3;

impl Texture {
    pub fn new(seed: u64, lo: f64, hi: f64, frequency: f64) -> Self {
        Self {
            seed,
            lo,
            hi,
            frequency,
        }
    }

    /// Uniform color `value` on every channel.
    pub fn flat(value: f64) -> Self {
        Self::new(0, value, value, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.lo)
            && (0.0..=1.0).contains(&self.hi)
            && self.lo <= self.hi
            && self.frequency.is_finite()
            && self.frequency >= 0.0
    }

    /// Color of channel `c` at surface coordinates `(s, t)` in meters.
    pub fn sample(&self, s: f64, t: f64, c: usize) -> f64 {
        if self.lo == self.hi || self.frequency == 0.0 {
            return self.lo;
        }
        let mut acc = 0.0;
        let mut amp = 1.0;
        let mut norm = 0.0;
        let mut f = self.frequency;
        for octave in 0..OCTAVES {
            let key = self.seed ^ ((c as u64) << 40) ^ ((octave as u64) << 52);
            acc += amp * value_noise(key, s * f, t * f);
            norm += amp;
            amp *= 0.5;
            f *= 2.0;
        }
        self.lo + (self.hi - self.lo) * (acc / norm)
    }
}

fn hash(key: u64, x: i64, y: i64) -> u64 {
    // SplitMix64 finalizer over a combined lattice key.
    let mut z = key
        .wrapping_add((x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(key: u64, x: i64, y: i64) -> f64 {
    (hash(key, x, y) >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smoothly interpolated lattice values in `[0, 1)`.
fn value_noise(key: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (fade(x - x0), fade(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(key, ix, iy);
    let b = lattice(key, ix + 1, iy);
    let c = lattice(key, ix, iy + 1);
    let d = lattice(key, ix + 1, iy + 1);
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}
