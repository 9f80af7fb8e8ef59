//! Synthetic paired scenes: colored primitives on black, with per-object
//! color offsets and shifts in the second image and known changed objects.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryChangeMap, ImageTensor};
use crate::rng::{rng_from, tag};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Rectangle,
    Round,
    Triangle,
}

/// Which images contain a primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Both,
    OnlyA,
    OnlyB,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    /// `(y, x)` in pixel coordinates; pixel `(r, c)` has its center at `(r+0.5, c+0.5)`.
    pub center: (f64, f64),
    pub size: f64,
    /// Color in image A.
    pub color: [f64; 3],
    /// Color in image B (A's color offset by ±delta per channel).
    pub color_b: [f64; 3],
    pub changed: bool,
    pub presence: Presence,
    /// `(dx, dy)` applied in image B.
    pub shift: (u32, u32),
}

impl PrimitiveSpec {
    /// The same primitive moved by its shift.
    pub fn shifted(&self) -> Self {
        let mut p = self.clone();
        p.center = (self.center.0 + self.shift.1 as f64, self.center.1 + self.shift.0 as f64);
        p.shift = (0, 0);
        p
    }

    /// Half-open bounding box `(y0, x0, y1, x1)` in continuous coordinates.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let r = self.size / 2.0;
        (self.center.0 - r, self.center.1 - r, self.center.0 + r, self.center.1 + r)
    }

    /// Whether the pixel with center `(py, px)` is covered.
    fn covers(&self, py: f64, px: f64) -> bool {
        let (cy, cx) = self.center;
        let s = self.size;
        let r = s / 2.0;
        match self.kind {
            PrimitiveKind::Rectangle => py >= cy - r && py < cy + r && px >= cx - r && px < cx + r,
            PrimitiveKind::Round => (py - cy).powi(2) + (px - cx).powi(2) <= r * r,
            PrimitiveKind::Triangle => {
                // Apex at the top, base of width `s` at the bottom.
                let depth = py - (cy - r);
                depth >= 0.0 && py < cy + r && (px - cx).abs() <= depth / 2.0
            }
        }
    }
}

/// Rasterizes a primitive at its own (unshifted) position.
pub fn footprint(p: &PrimitiveSpec, h: usize, w: usize) -> Result<BinaryChangeMap> {
    let (y0, x0, y1, x1) = p.bounds();
    if !(p.size >= 0.0) || y0 < 0.0 || x0 < 0.0 || y1 > h as f64 || x1 > w as f64 {
        return Err(Error::OutOfBounds(format!("primitive {:?} outside {h}x{w}", p)));
    }
    let mut map = BinaryChangeMap::empty(h, w);
    let rows = (y0.floor() as usize)..(y1.ceil() as usize).min(h);
    for y in rows {
        for x in (x0.floor() as usize)..(x1.ceil() as usize).min(w) {
            if p.covers(y as f64 + 0.5, x as f64 + 0.5) {
                map.set(y, x, true);
            }
        }
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range for the number of unchanged primitives.
    pub min_common: usize,
    pub max_common: usize,
    pub changed: usize,
    /// Inclusive range for primitive side / diameter.
    pub min_size: usize,
    pub max_size: usize,
    /// Per-channel color offset between the two images.
    pub delta: f64,
    /// Shift components are drawn from `0..=max_shift`.
    pub max_shift: u32,
    /// Gaussian smoothing of both images; 0 disables it.
    pub sigma: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            min_common: 5,
            max_common: 8,
            changed: 3,
            min_size: 12,
            max_size: 26,
            delta: 10.0 / 255.0,
            max_shift: 5,
            sigma: 0.0,
            max_attempts: 5000,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.height == 0 || self.width == 0 {
            return bad(format!("scene size {}x{}", self.height, self.width));
        }
        if self.min_common > self.max_common || self.min_size > self.max_size {
            return bad("empty primitive count or size range".into());
        }
        if !(0.0..=0.5).contains(&self.delta) {
            return bad(format!("delta {} outside [0, 0.5]", self.delta));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma {}", self.sigma));
        }
        if self.max_size + self.max_shift as usize + 2 > self.height.min(self.width) {
            return bad("primitives do not fit in the scene".into());
        }
        Ok(())
    }
}

/// Generated pair with ground truth and the primitives that produced it.
#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub a: ImageTensor<T>,
    pub b: ImageTensor<T>,
    pub truth: BinaryChangeMap,
    pub primitives: Vec<PrimitiveSpec>,
}

fn boxes_overlap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    a.0 < b.2 && b.0 < a.2 && a.1 < b.3 && b.1 < a.3
}

/// Box covering a primitive at both of its positions, dilated by one pixel.
fn occupied(p: &PrimitiveSpec) -> (f64, f64, f64, f64) {
    let (y0, x0, y1, x1) = p.bounds();
    (y0 - 1.0, x0 - 1.0, y1 + p.shift.1 as f64 + 1.0, x1 + p.shift.0 as f64 + 1.0)
}

fn place<R: Rng>(cfg: &SceneConfig, rng: &mut R, placed: &[PrimitiveSpec], changed: bool) -> Result<PrimitiveSpec> {
    let lo = cfg.delta;
    let hi = 1.0 - cfg.delta;
    for _ in 0..cfg.max_attempts {
        let kind = match rng.random_range(0..3) {
            0 => PrimitiveKind::Rectangle,
            1 => PrimitiveKind::Round,
            _ => PrimitiveKind::Triangle,
        };
        let size = rng.random_range(cfg.min_size..=cfg.max_size) as f64;
        let shift =
            if changed { (0, 0) } else { (rng.random_range(0..=cfg.max_shift), rng.random_range(0..=cfg.max_shift)) };
        let r = size / 2.0;
        let cy_max = cfg.height as f64 - r - shift.1 as f64;
        let cx_max = cfg.width as f64 - r - shift.0 as f64;
        if cy_max < r || cx_max < r {
            continue;
        }
        // Integer-aligned corners keep rectangles pixel exact.
        let cy = (rng.random_range(r..=cy_max) - r).floor() + r;
        let cx = (rng.random_range(r..=cx_max) - r).floor() + r;
        // Colors stay away from black so objects stand out from the background.
        let base_lo = lo.max(0.25);
        let mut color = [0.0; 3];
        let mut color_b = [0.0; 3];
        for c in 0..3 {
            color[c] = rng.random_range(base_lo..=hi.max(base_lo));
            color_b[c] = if rng.random::<bool>() { color[c] + cfg.delta } else { color[c] - cfg.delta };
        }
        let presence = if !changed {
            Presence::Both
        } else if rng.random::<bool>() {
            Presence::OnlyA
        } else {
            Presence::OnlyB
        };
        let p = PrimitiveSpec { kind, center: (cy, cx), size, color, color_b, changed, presence, shift };
        if placed.iter().all(|q| !boxes_overlap(occupied(&p), occupied(q))) {
            return Ok(p);
        }
    }
    Err(Error::Placement(format!("no room for primitive {} after {} attempts", placed.len() + 1, cfg.max_attempts)))
}

fn paint(buf: &mut [f64], fp: &BinaryChangeMap, color: &[f64; 3]) {
    for (i, &on) in fp.data().iter().enumerate() {
        if on {
            buf[i * 3..i * 3 + 3].copy_from_slice(color);
        }
    }
}

/// Separable Gaussian blur with clamp-to-edge borders; `sigma = 0` is the identity.
pub fn gaussian_smooth(buf: &[f64], h: usize, w: usize, c: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return buf.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (j, k) in kernel.iter().enumerate() {
                        let off = j as isize - radius;
                        let (yy, xx) = if horizontal {
                            (y, (x as isize + off).clamp(0, w as isize - 1) as usize)
                        } else {
                            ((y as isize + off).clamp(0, h as isize - 1) as usize, x)
                        };
                        acc += k * src[(yy * w + xx) * c + ch];
                    }
                    out[(y * w + x) * c + ch] = acc.clamp(0.0, 1.0);
                }
            }
        }
        out
    };
    pass(&pass(buf, true), false)
}

/// Draws a scene pair. Same config (including seed) gives identical output.
pub fn generate_scene_pair<T: Scalar>(cfg: &SceneConfig) -> Result<Scene<T>> {
    cfg.validate()?;
    let mut rng = rng_from(cfg.seed, &[tag::SCENE]);
    let n_common = rng.random_range(cfg.min_common..=cfg.max_common);
    let mut prims = Vec::with_capacity(n_common + cfg.changed);
    for i in 0..n_common + cfg.changed {
        let p = place(cfg, &mut rng, &prims, i >= n_common)?;
        prims.push(p);
    }
    let (h, w) = (cfg.height, cfg.width);
    let mut a = vec![0.0; h * w * 3];
    let mut b = vec![0.0; h * w * 3];
    let mut truth = BinaryChangeMap::empty(h, w);
    for p in &prims {
        if p.presence != Presence::OnlyB {
            paint(&mut a, &footprint(p, h, w)?, &p.color);
        }
        if p.presence != Presence::OnlyA {
            paint(&mut b, &footprint(&p.shifted(), h, w)?, &p.color_b);
        }
        if p.changed {
            truth = truth.union(&footprint(p, h, w)?)?;
        }
    }
    let to_image = |buf: Vec<f64>| {
        let smoothed = gaussian_smooth(&buf, h, w, 3, cfg.sigma);
        ImageTensor::new(h, w, 3, smoothed.into_iter().map(T::from_f64_lossy).collect())
    };
    Ok(Scene { a: to_image(a)?, b: to_image(b)?, truth, primitives: prims })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prim(kind: PrimitiveKind, cy: f64, cx: f64, size: f64) -> PrimitiveSpec {
        PrimitiveSpec {
            kind,
            center: (cy, cx),
            size,
            color: [0.5; 3],
            color_b: [0.5; 3],
            changed: false,
            presence: Presence::Both,
            shift: (0, 0),
        }
    }

    #[test]
    fn rectangle_area() {
        let fp = footprint(&prim(PrimitiveKind::Rectangle, 10.0, 10.0, 4.0), 32, 32).unwrap();
        assert_eq!(fp.count(), 16);
        assert!(fp.get(8, 8) && fp.get(11, 11) && !fp.get(12, 12) && !fp.get(7, 8));
    }

    #[test]
    fn round_area_within_perimeter() {
        for r in [3.0, 5.5, 10.0, 17.0] {
            let fp = footprint(&prim(PrimitiveKind::Round, 40.0, 40.0, 2.0 * r), 80, 80).unwrap();
            let area = std::f64::consts::PI * r * r;
            let count = fp.count() as f64;
            assert!((count - area).abs() <= 2.0 * std::f64::consts::PI * r, "r={r} count={count}");
        }
    }

    #[test]
    fn triangle_cases() {
        assert!(footprint(&prim(PrimitiveKind::Triangle, 10.0, 10.0, 0.0), 20, 20).unwrap().is_empty());
        let fp = footprint(&prim(PrimitiveKind::Triangle, 20.0, 20.0, 16.0), 40, 40).unwrap();
        let area = 16.0 * 16.0 / 2.0;
        assert!((fp.count() as f64 - area).abs() <= 4.0 * 16.0);
        assert!(footprint(&prim(PrimitiveKind::Triangle, 3.0, 20.0, 16.0), 40, 40).is_err());
    }

    #[test]
    fn no_change_means_empty_truth() {
        let cfg = SceneConfig { changed: 0, ..Default::default() };
        let s = generate_scene_pair::<f64>(&cfg).unwrap();
        assert!(s.truth.is_empty());
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig { seed: 42, ..Default::default() };
        let s1 = generate_scene_pair::<f32>(&cfg).unwrap();
        let s2 = generate_scene_pair::<f32>(&cfg).unwrap();
        assert_eq!(s1.a, s2.a);
        assert_eq!(s1.b, s2.b);
        assert_eq!(s1.truth, s2.truth);
        let s3 = generate_scene_pair::<f32>(&SceneConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(s1.a, s3.a);
    }

    #[test]
    fn common_primitives_differ_by_delta() {
        for seed in 0..5 {
            let cfg = SceneConfig { seed, ..Default::default() };
            let s = generate_scene_pair::<f64>(&cfg).unwrap();
            for p in s.primitives.iter().filter(|p| !p.changed) {
                let fa = footprint(p, 128, 128).unwrap();
                let fb = footprint(&p.shifted(), 128, 128).unwrap();
                let both = fa.intersection(&fb).unwrap();
                assert!(both.count() > 0);
                for y in 0..128 {
                    for x in 0..128 {
                        if both.get(y, x) {
                            for c in 0..3 {
                                let d = (s.a.get(y, x, c) - s.b.get(y, x, c)).abs();
                                assert!((d - cfg.delta).abs() < 1e-12, "diff {d}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn footprints_never_intersect_and_truth_is_changed_union() {
        for seed in 0..10 {
            let s = generate_scene_pair::<f32>(&SceneConfig { seed, ..Default::default() }).unwrap();
            let mut fps = Vec::new();
            for p in &s.primitives {
                fps.push(footprint(p, 128, 128).unwrap());
                fps.push(footprint(&p.shifted(), 128, 128).unwrap());
            }
            for i in 0..s.primitives.len() {
                for j in i + 1..s.primitives.len() {
                    for a in &fps[2 * i..2 * i + 2] {
                        for b in &fps[2 * j..2 * j + 2] {
                            assert!(a.intersection(b).unwrap().is_empty());
                        }
                    }
                }
            }
            let mut want = BinaryChangeMap::empty(128, 128);
            for p in s.primitives.iter().filter(|p| p.changed) {
                want = want.union(&footprint(p, 128, 128).unwrap()).unwrap();
            }
            assert_eq!(want, s.truth);
            assert_eq!(s.primitives.iter().filter(|p| p.changed).count(), 3);
            assert!(s.primitives.iter().all(|p| p.shift.0 <= 5 && p.shift.1 <= 5));
        }
    }

    #[test]
    fn smoothing() {
        let buf: Vec<f64> = (0..5 * 4 * 3).map(|i| (i % 7) as f64 / 7.0).collect();
        assert_eq!(gaussian_smooth(&buf, 5, 4, 3, 0.0), buf);
        let flat = vec![0.3; 5 * 4 * 3];
        for v in gaussian_smooth(&flat, 5, 4, 3, 1.5) {
            assert!((v - 0.3).abs() < 1e-12);
        }
        let cfg = SceneConfig { sigma: 1.0, seed: 3, ..Default::default() };
        let s = generate_scene_pair::<f32>(&cfg).unwrap();
        assert!(s.a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn impossible_placement_fails() {
        let cfg = SceneConfig {
            height: 40,
            width: 40,
            min_common: 30,
            max_common: 30,
            min_size: 20,
            max_size: 20,
            max_attempts: 50,
            ..Default::default()
        };
        assert!(matches!(generate_scene_pair::<f32>(&cfg), Err(Error::Placement(_))));
    }
}
