//! Change maps from generated samples: normalized differences against a
//! reference sample, thresholded, averaged and reduced over channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{global_max_normalize, BinaryChangeMap, ChangeIntensityMap, ImageTensor};
use crate::nets::{generate, sample_latent, GeneratorParams};
use crate::rng::{rng_from, tag};
use crate::scalar::Scalar;

const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Number of generated samples.
    pub n: usize,
    pub pixel_threshold: f64,
    pub seed: u64,
    /// Zero every map value below half of the map maximum.
    pub drop_below_half_max: bool,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self { n: 64, pixel_threshold: 0.1, seed: 0, drop_below_half_max: false }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("comparison needs n >= 2, got {}", self.n)));
        }
        if !(0.0..1.0).contains(&self.pixel_threshold) {
            return Err(Error::InvalidConfig(format!("pixel_threshold {} outside [0,1)", self.pixel_threshold)));
        }
        Ok(())
    }
}

/// `n` evaluation-mode samples; latent vectors are drawn in sequence, so a
/// shorter run is a prefix of a longer one with the same seed.
pub fn sample_generated<T: Scalar>(params: &GeneratorParams<T>, n: usize, seed: u64) -> Result<Vec<ImageTensor<T>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let dim = params.arch.latent_dim;
    let mut rng = rng_from(seed, &[tag::INFER]);
    let z: Vec<Vec<T>> = (0..n).map(|_| sample_latent(&mut rng, 1, dim)).collect();
    let mut out = Vec::with_capacity(n);
    for chunk in z.chunks(CHUNK) {
        out.extend(generate(params, chunk)?);
    }
    Ok(out)
}

/// Values below `cutoff` become 0.
pub fn pixel_threshold_map<T: Scalar>(img: &ImageTensor<T>, cutoff: T) -> ImageTensor<T> {
    let (h, w, c) = img.shape();
    let data = img.data().iter().map(|&v| if v < cutoff { T::zero() } else { v }).collect();
    ImageTensor::from_raw(h, w, c, data)
}

/// Mean over `i ≥ 2` of the thresholded `|xⁱ/max(xⁱ) − x¹/max(x¹)|`.
pub fn rough_difference_map<T: Scalar>(images: &[ImageTensor<T>], cutoff: T) -> Result<ImageTensor<T>> {
    if images.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 images, got {}", images.len())));
    }
    let reference = global_max_normalize(&images[0])?;
    let mut acc = vec![T::zero(); reference.data().len()];
    for img in &images[1..] {
        img.ensure_same_shape(&reference)?;
        let norm = global_max_normalize(img)?;
        for ((a, &x), &r) in acc.iter_mut().zip(norm.data()).zip(reference.data()) {
            let d = (x - r).abs();
            if d >= cutoff {
                *a += d;
            }
        }
    }
    let scale = T::from_f64_lossy((images.len() - 1) as f64);
    let (h, w, c) = reference.shape();
    Ok(ImageTensor::from_raw(h, w, c, acc.into_iter().map(|v| (v / scale).min(T::one())).collect()))
}

pub fn channel_max_reduce<T: Scalar>(delta: &ImageTensor<T>) -> Result<ChangeIntensityMap<T>> {
    let (h, w, c) = delta.shape();
    if c != 3 {
        return Err(Error::ShapeMismatch(format!("channel max expects 3 channels, got {c}")));
    }
    let data = delta.data().chunks_exact(3).map(|p| p[0].max(p[1]).max(p[2])).collect();
    ChangeIntensityMap::new(h, w, data)
}

/// `true` where the value is at least `t`.
pub fn binarize<T: Scalar>(map: &ChangeIntensityMap<T>, t: T) -> BinaryChangeMap {
    let data = map.data().iter().map(|&v| v >= t).collect();
    BinaryChangeMap::new(map.height(), map.width(), data).expect("map dimensions are valid")
}

/// Samples the generator and reduces the rough difference map to one channel.
pub fn change_map<T: Scalar>(params: &GeneratorParams<T>, cmp: &ComparisonConfig) -> Result<ChangeIntensityMap<T>> {
    cmp.validate()?;
    let images = sample_generated(params, cmp.n, cmp.seed)?;
    let map = channel_max_reduce(&rough_difference_map(&images, T::from_f64_lossy(cmp.pixel_threshold))?)?;
    Ok(if cmp.drop_below_half_max { map.drop_below_half_max() } else { map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{build_generator, ArchitectureConfig};
    use crate::nn::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(6, 5, 3, |_, _, _| rng.random_range(0.01..1.0)).unwrap()
    }

    fn small_arch() -> ArchitectureConfig {
        ArchitectureConfig { latent_dim: 6, image_size: 16, clip_size: 8, base_channels: 2, ..Default::default() }
    }

    #[test]
    fn threshold_cases() {
        let img = ImageTensor::new(1, 3, 1, vec![0.05, 0.3, 0.1]).unwrap();
        assert_eq!(pixel_threshold_map(&img, 0.1).data(), &[0.0, 0.3, 0.1]);
        assert_eq!(pixel_threshold_map(&img, 0.0), img);
    }

    #[test]
    fn rough_difference_cases() {
        let a = random_image(1);
        assert!(rough_difference_map(&[a.clone(), a.clone(), a.clone()], 0.1).unwrap().max_value() == 0.0);
        assert!(rough_difference_map(std::slice::from_ref(&a), 0.1).is_err());
        let zero = ImageTensor::<f64>::zeros(6, 5, 3).unwrap();
        assert!(rough_difference_map(&[a.clone(), zero], 0.1).is_err());

        let b = random_image(2);
        let two = rough_difference_map(&[a.clone(), b.clone()], 0.1).unwrap();
        let (na, nb) = (global_max_normalize(&a).unwrap(), global_max_normalize(&b).unwrap());
        let direct = pixel_threshold_map(
            &ImageTensor::new(6, 5, 3, na.data().iter().zip(nb.data()).map(|(x, y)| (x - y).abs()).collect()).unwrap(),
            0.1,
        );
        assert_eq!(two, direct);
    }

    #[test]
    fn rough_difference_matches_loop() {
        let imgs: Vec<_> = (10..15).map(random_image).collect();
        let got = rough_difference_map(&imgs, 0.1).unwrap();
        let maxes: Vec<f64> = imgs.iter().map(|i| i.data().iter().cloned().fold(0.0, f64::max)).collect();
        for y in 0..6 {
            for x in 0..5 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for i in 1..5 {
                        let d = (imgs[i].get(y, x, c) / maxes[i] - imgs[0].get(y, x, c) / maxes[0]).abs();
                        if d >= 0.1 {
                            acc += d;
                        }
                    }
                    assert!((got.get(y, x, c) - acc / 4.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rescaling_an_image_does_not_change_the_map() {
        let imgs: Vec<_> = (20..24).map(random_image).collect();
        let mut scaled = imgs.clone();
        scaled[2] = ImageTensor::new(6, 5, 3, imgs[2].data().iter().map(|v| v * 0.5).collect()).unwrap();
        let a = rough_difference_map(&imgs, 0.1).unwrap();
        let b = rough_difference_map(&scaled, 0.1).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_max_cases() {
        let img = ImageTensor::new(1, 1, 3, vec![0.1, 0.5, 0.2]).unwrap();
        assert_eq!(channel_max_reduce(&img).unwrap().data(), &[0.5]);
        let zero = ImageTensor::<f64>::zeros(3, 3, 3).unwrap();
        assert!(channel_max_reduce(&zero).unwrap().data().iter().all(|v| *v == 0.0));
        let r = random_image(30);
        let m = channel_max_reduce(&r).unwrap();
        for y in 0..6 {
            for x in 0..5 {
                let want = (0..3).map(|c| r.get(y, x, c)).fold(f64::MIN, f64::max);
                assert_eq!(m.get(y, x), want);
            }
        }
        assert!(channel_max_reduce(&ImageTensor::<f64>::zeros(2, 2, 1).unwrap()).is_err());
    }

    #[test]
    fn binarize_cases() {
        let map = ChangeIntensityMap::new(1, 4, vec![0.0, 0.3, 0.7, 1.0]).unwrap();
        assert_eq!(binarize(&map, 0.0).count(), 4);
        assert_eq!(binarize(&map, 1.0).data(), &[false, false, false, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ChangeIntensityMap::new(8, 8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
        for _ in 0..50 {
            let (t1, t2): (f64, f64) = (rng.random(), rng.random());
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let high = binarize(&m, hi);
            assert_eq!(high.intersection(&binarize(&m, lo)).unwrap(), high);
        }
    }

    #[test]
    fn sampling_is_seeded_and_prefix_stable() {
        let g = build_generator::<f64>(&small_arch(), 3).unwrap();
        let a = sample_generated(&g, 2, 9).unwrap();
        assert_eq!(a, sample_generated(&g, 2, 9).unwrap());
        assert_eq!(sample_generated(&g, 1, 9).unwrap()[0], a[0]);
        assert!(a.iter().all(|i| i.min_value() > 0.0 && i.max_value() < 1.0));
        assert!(sample_generated(&g, 0, 9).is_err());
    }

    #[test]
    fn change_map_cases() {
        let g = build_generator::<f64>(&small_arch(), 3).unwrap();
        let cmp = ComparisonConfig { n: 4, seed: 2, ..Default::default() };
        let m = change_map(&g, &cmp).unwrap();
        assert_eq!(m, change_map(&g, &cmp).unwrap());
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(change_map(&g, &ComparisonConfig { n: 1, ..cmp.clone() }).is_err());

        // Zero final weights turn the generator into a constant image.
        let mut flat = g.clone();
        let params = flat.net.params_mut();
        let last = params.len() - 2;
        params[last] = Tensor { data: vec![0.0; params[last].data.len()], ..params[last].clone() };
        let m = change_map(&flat, &cmp).unwrap();
        assert!(m.data().iter().all(|v| *v == 0.0));
    }
}
