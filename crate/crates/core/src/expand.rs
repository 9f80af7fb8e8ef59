//! Training-set expansion from a single pair by straight-line and partial
//! (mask) sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear_resample, ImageTensor};
use crate::rng::{rng_from, tag};
use crate::scalar::Scalar;

/// H×W blending weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMask<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> PixelMask<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let img = ImageTensor::new(height, width, 1, data)?;
        Ok(Self { height, width, data: img.into_data() })
    }

    pub fn constant(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Corner-aligned bilinear resize.
    pub fn resize(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::InvalidArgument(format!("resize target {out_h}x{out_w}")));
        }
        let data = bilinear_resample(&self.data, self.height, self.width, 1, out_h, out_w);
        Ok(Self { height: out_h, width: out_w, data })
    }
}

/// Atoms at 0 and 1 plus a uniform remainder on `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDistribution {
    pub p_zero: f64,
    pub p_one: f64,
}

impl Default for MaskDistribution {
    fn default() -> Self {
        Self { p_zero: 0.4, p_one: 0.4 }
    }
}

impl MaskDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.p_zero) || !ok(self.p_one) || self.p_zero + self.p_one > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "mask distribution p_zero={} p_one={} must be in [0,1] with sum <= 1",
                self.p_zero, self.p_one
            )));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.p_zero {
            0.0
        } else if u < self.p_zero + self.p_one {
            1.0
        } else {
            // Open interval: reject the (measure-zero) endpoints.
            loop {
                let v: f64 = rng.random();
                if v > 0.0 {
                    return v;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    StraightLine,
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub strategy: Strategy,
    /// Set size per epoch.
    pub n: usize,
    /// Tiny-mask size; the default suits 128×128 images.
    pub tiny_h: usize,
    pub tiny_w: usize,
    pub mask: MaskDistribution,
    pub seed: u64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Partial, n: 3200, tiny_h: 8, tiny_w: 8, mask: MaskDistribution::default(), seed: 0 }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("expansion set size {} < 2", self.n)));
        }
        if self.tiny_h < 2 || self.tiny_w < 2 {
            return Err(Error::InvalidConfig(format!("tiny mask {}x{} smaller than 2x2", self.tiny_h, self.tiny_w)));
        }
        self.mask.validate()
    }
}

#[inline]
fn blend<T: Scalar>(m: T, a: T, b: T) -> T {
    (m * a + (T::one() - m) * b).max(a.min(b)).min(a.max(b))
}

/// `(k/(n+1))·I₀ + (1 − k/(n+1))·I₁`.
pub fn straight_line_sample<T: Scalar>(
    i0: &ImageTensor<T>,
    i1: &ImageTensor<T>,
    k: usize,
    n: usize,
) -> Result<ImageTensor<T>> {
    i0.ensure_same_shape(i1)?;
    if k > n {
        return Err(Error::OutOfBounds(format!("index k={k} exceeds n={n}")));
    }
    let a = T::from_f64_lossy(k as f64 / (n as f64 + 1.0));
    let data = i0.data().iter().zip(i1.data()).map(|(&x0, &x1)| blend(a, x0, x1)).collect();
    let (h, w, c) = i0.shape();
    Ok(ImageTensor::from_raw(h, w, c, data))
}

pub fn sample_tiny_mask_with<T: Scalar, R: Rng + ?Sized>(
    h: usize,
    w: usize,
    dist: &MaskDistribution,
    rng: &mut R,
) -> Result<PixelMask<T>> {
    dist.validate()?;
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!("tiny mask {h}x{w}")));
    }
    let data = (0..h * w).map(|_| T::from_f64_lossy(dist.draw(rng)).min(T::one())).collect();
    Ok(PixelMask { height: h, width: w, data })
}

/// Independent cells: 0 w.p. `p_zero`, 1 w.p. `p_one`, else uniform on `(0,1)`.
pub fn sample_tiny_mask<T: Scalar>(h: usize, w: usize, dist: &MaskDistribution, seed: u64) -> Result<PixelMask<T>> {
    sample_tiny_mask_with(h, w, dist, &mut rng_from(seed, &[tag::EXPAND]))
}

/// `M·I₀ + (1−M)·I₁`, with `M` broadcast over channels.
pub fn partial_sample<T: Scalar>(
    i0: &ImageTensor<T>,
    i1: &ImageTensor<T>,
    mask: &PixelMask<T>,
) -> Result<ImageTensor<T>> {
    i0.ensure_same_shape(i1)?;
    let (h, w, c) = i0.shape();
    if mask.height != h || mask.width != w {
        return Err(Error::ShapeMismatch(format!("mask {}x{} vs image {h}x{w}", mask.height, mask.width)));
    }
    let mut data = Vec::with_capacity(h * w * c);
    for (p, &m) in mask.data.iter().enumerate() {
        for ch in 0..c {
            data.push(blend(m, i0.data()[p * c + ch], i1.data()[p * c + ch]));
        }
    }
    Ok(ImageTensor::from_raw(h, w, c, data))
}

/// Lazy view of the expanded set; image `k` of `epoch` is a pure function of
/// the config seed.
#[derive(Clone, Debug)]
pub struct Expander<'a, T> {
    i0: &'a ImageTensor<T>,
    i1: &'a ImageTensor<T>,
    cfg: ExpansionConfig,
}

impl<'a, T: Scalar> Expander<'a, T> {
    pub fn new(i0: &'a ImageTensor<T>, i1: &'a ImageTensor<T>, cfg: &ExpansionConfig) -> Result<Self> {
        cfg.validate()?;
        i0.ensure_same_shape(i1)?;
        Ok(Self { i0, i1, cfg: cfg.clone() })
    }

    pub fn len(&self) -> usize {
        self.cfg.n
    }

    pub fn is_empty(&self) -> bool {
        self.cfg.n == 0
    }

    pub fn image(&self, epoch: u64, k: usize) -> Result<ImageTensor<T>> {
        match self.cfg.strategy {
            Strategy::StraightLine => straight_line_sample(self.i0, self.i1, k, self.cfg.n),
            Strategy::Partial => {
                let mut rng = rng_from(self.cfg.seed, &[tag::EXPAND, epoch, k as u64]);
                let tiny = sample_tiny_mask_with::<T, _>(self.cfg.tiny_h, self.cfg.tiny_w, &self.cfg.mask, &mut rng)?;
                let mask = tiny.resize(self.i0.height(), self.i0.width())?;
                partial_sample(self.i0, self.i1, &mask)
            }
        }
    }
}

/// Materializes the first epoch of the expanded set.
pub fn build_training_set<T: Scalar>(
    i0: &ImageTensor<T>,
    i1: &ImageTensor<T>,
    cfg: &ExpansionConfig,
) -> Result<Vec<ImageTensor<T>>> {
    let ex = Expander::new(i0, i1, cfg)?;
    (0..cfg.n).map(|k| ex.image(0, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, 3, |_, _, _| rng.random()).unwrap()
    }

    #[test]
    fn straight_line_cases() {
        let a = random_image(5, 6, 1);
        let b = random_image(5, 6, 2);
        assert_eq!(straight_line_sample(&a, &b, 0, 10).unwrap(), b);
        assert_eq!(straight_line_sample(&a, &a, 7, 10).unwrap(), a);
        let mid = straight_line_sample(&a, &b, 1, 1).unwrap();
        for ((m, x), y) in mid.data().iter().zip(a.data()).zip(b.data()) {
            assert!((m - (0.5 * x + 0.5 * y)).abs() < 1e-9);
        }
        assert!(straight_line_sample(&a, &b, 11, 10).is_err());
        let small = random_image(4, 6, 3);
        assert!(straight_line_sample(&a, &small, 0, 1).is_err());
    }

    #[test]
    fn tiny_mask_degenerate_distributions() {
        let zero = sample_tiny_mask::<f64>(8, 8, &MaskDistribution { p_zero: 1.0, p_one: 0.0 }, 3).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
        let one = sample_tiny_mask::<f64>(8, 8, &MaskDistribution { p_zero: 0.0, p_one: 1.0 }, 3).unwrap();
        assert!(one.data().iter().all(|v| *v == 1.0));
        assert!(sample_tiny_mask::<f64>(8, 8, &MaskDistribution { p_zero: 0.7, p_one: 0.7 }, 3).is_err());
        assert!(sample_tiny_mask::<f64>(8, 8, &MaskDistribution { p_zero: -0.1, p_one: 0.5 }, 3).is_err());
    }

    #[test]
    fn tiny_mask_atom_frequencies() {
        let m = sample_tiny_mask::<f64>(250, 400, &MaskDistribution::default(), 11).unwrap();
        let n = m.data().len() as f64;
        let zeros = m.data().iter().filter(|v| **v == 0.0).count() as f64 / n;
        let ones = m.data().iter().filter(|v| **v == 1.0).count() as f64 / n;
        assert!((zeros - 0.4).abs() <= 0.01, "zero mass {zeros}");
        assert!((ones - 0.4).abs() <= 0.01, "one mass {ones}");
    }

    #[test]
    fn tiny_mask_is_seeded() {
        let d = MaskDistribution::default();
        assert_eq!(sample_tiny_mask::<f32>(8, 8, &d, 5).unwrap(), sample_tiny_mask::<f32>(8, 8, &d, 5).unwrap());
        assert_ne!(sample_tiny_mask::<f32>(8, 8, &d, 5).unwrap(), sample_tiny_mask::<f32>(8, 8, &d, 6).unwrap());
    }

    #[test]
    fn partial_sample_cases() {
        let a = random_image(6, 5, 4);
        let b = random_image(6, 5, 5);
        assert_eq!(partial_sample(&a, &b, &PixelMask::constant(6, 5, 1.0).unwrap()).unwrap(), a);
        assert_eq!(partial_sample(&a, &b, &PixelMask::constant(6, 5, 0.0).unwrap()).unwrap(), b);
        let half = partial_sample(&a, &b, &PixelMask::constant(6, 5, 0.5).unwrap()).unwrap();
        assert_eq!(half, straight_line_sample(&a, &b, 1, 1).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mask = PixelMask::new(6, 5, (0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let out = partial_sample(&a, &b, &mask).unwrap();
        for y in 0..6 {
            for x in 0..5 {
                for c in 0..3 {
                    let m = mask.get(y, x);
                    let want = m * a.get(y, x, c) + (1.0 - m) * b.get(y, x, c);
                    assert!((out.get(y, x, c) - want).abs() < 1e-9);
                }
            }
        }
        assert!(partial_sample(&a, &b, &PixelMask::constant(5, 5, 0.5).unwrap()).is_err());
    }

    #[test]
    fn build_set_cases() {
        let a = random_image(8, 8, 6);
        let b = random_image(8, 8, 7);
        let cfg = ExpansionConfig { strategy: Strategy::StraightLine, n: 2, ..Default::default() };
        let set = build_training_set(&a, &b, &cfg).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set[0], b);
        for ((s, x), y) in set[1].data().iter().zip(a.data()).zip(b.data()) {
            assert!((s - (x / 3.0 + 2.0 * y / 3.0)).abs() < 1e-12);
        }

        let cfg = ExpansionConfig {
            strategy: Strategy::Partial,
            n: 5,
            mask: MaskDistribution { p_zero: 1.0, p_one: 0.0 },
            ..Default::default()
        };
        for img in build_training_set(&a, &b, &cfg).unwrap() {
            assert_eq!(img, b);
        }

        let cfg = ExpansionConfig { n: 20, seed: 3, ..Default::default() };
        let set = build_training_set(&a, &b, &cfg).unwrap();
        assert_eq!(set, build_training_set(&a, &b, &cfg).unwrap());
        for img in &set {
            for ((v, x), y) in img.data().iter().zip(a.data()).zip(b.data()) {
                assert!(*v >= x.min(*y) && *v <= x.max(*y));
            }
        }
        assert!(build_training_set(&a, &b, &ExpansionConfig { n: 1, ..Default::default() }).is_err());
        assert!(build_training_set(&a, &b, &ExpansionConfig { tiny_h: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn one_cell_change_stays_in_its_support() {
        let a = random_image(16, 16, 8);
        let b = random_image(16, 16, 9);
        let base = PixelMask::new(4, 4, vec![0.3; 16]).unwrap();
        let mut data = base.data().to_vec();
        data[4 + 2] = 0.9; // cell (1, 2)
        let bumped = PixelMask::new(4, 4, data).unwrap();
        let x = partial_sample(&a, &b, &base.resize(16, 16).unwrap()).unwrap();
        let y = partial_sample(&a, &b, &bumped.resize(16, 16).unwrap()).unwrap();
        // Corner-aligned: output row r sits at r·3/15 in tiny coordinates.
        let inside = |i: usize, cell: f64| ((i as f64 * 3.0 / 15.0) - cell).abs() < 1.0;
        for r in 0..16 {
            for c in 0..16 {
                if !(inside(r, 1.0) && inside(c, 2.0)) {
                    for ch in 0..3 {
                        assert_eq!(x.get(r, c, ch), y.get(r, c, ch), "pixel ({r},{c}) outside support changed");
                    }
                }
            }
        }
        assert_ne!(x, y);
    }
}
