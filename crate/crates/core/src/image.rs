//! Pixel containers, distances, resampling, clipping and PNG IO.
//!
//! Images are stored height-major, channel-interleaved (`HWC`) with every
//! value in `[0, 1]`.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// H×W×C floating image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!("data length {} != {height}*{width}*{channels}", data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::OutOfBounds(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Builds an image without range checks; callers guarantee values in `[0,1]`.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| *v >= T::zero() && *v <= T::one()));
        Self { height, width, channels, data }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, T::zero())
    }

    /// Builds an image from `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::one(), T::min)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())))
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| U::from_f64_lossy(v.as_f64()).max(U::zero()).min(U::one())).collect(),
        )
    }
}

/// Single-channel per-pixel change possibility in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeIntensityMap<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> ChangeIntensityMap<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let img = ImageTensor::new(height, width, 1, data)?;
        Ok(Self { height, width, data: img.data })
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

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_image(&self) -> ImageTensor<T> {
        ImageTensor::from_raw(self.height, self.width, 1, self.data.clone())
    }

    pub fn from_image(img: &ImageTensor<T>) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::ShapeMismatch(format!("intensity map needs 1 channel, got {}", img.channels())));
        }
        Ok(Self { height: img.height, width: img.width, data: img.data.clone() })
    }

    /// Zeroes every pixel below half of the map's maximum.
    pub fn drop_below_half_max(&self) -> Self {
        let cut = self.max_value() / T::from_f64_lossy(2.0);
        let data = self.data.iter().map(|&v| if v < cut { T::zero() } else { v }).collect();
        Self { height: self.height, width: self.width, data }
    }
}

/// Thresholded change map; `true` marks a changed pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryChangeMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryChangeMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::ShapeMismatch(format!("binary map {height}x{width} with {} values", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Pixel-wise OR; shapes must match.
    pub fn union(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    /// Pixel-wise AND; shapes must match.
    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.height == other.height && self.width == other.width {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", self.height, self.width, other.height, other.width)))
        }
    }

    pub fn to_image<T: Scalar>(&self) -> ImageTensor<T> {
        let data = self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        ImageTensor::from_raw(self.height, self.width, 1, data)
    }

    /// Pixels of a grayscale image at or above one half become `true`.
    pub fn from_image<T: Scalar>(img: &ImageTensor<T>) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::ShapeMismatch(format!("binary map needs 1 channel, got {}", img.channels())));
        }
        let half = T::from_f64_lossy(0.5);
        Ok(Self { height: img.height, width: img.width, data: img.data.iter().map(|v| *v >= half).collect() })
    }
}

/// Square sub-window `[top, top+size) × [left, left+size)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClipRegion {
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

impl ClipRegion {
    pub fn new(top: usize, left: usize, size: usize) -> Self {
        Self { top, left, size }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.size > 0 && self.top + self.size <= height && self.left + self.size <= width
    }
}

/// Sum over all pixel-channels of the squared difference.
pub fn l2_distance<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<T> {
    a.ensure_same_shape(b)?;
    Ok(sum_squared_diff(&a.data, &b.data))
}

#[inline]
pub(crate) fn sum_squared_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// Corner-aligned bilinear resampling of an interleaved `h×w×c` plane.
pub(crate) fn bilinear_resample<T: Scalar>(
    src: &[T],
    h: usize,
    w: usize,
    c: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let coords = |out: usize, inp: usize| -> Vec<(usize, usize, T)> {
        (0..out)
            .map(|i| {
                if out == 1 || inp == 1 {
                    return (0, 0, T::zero());
                }
                let pos = i as f64 * (inp - 1) as f64 / (out - 1) as f64;
                let lo = (pos.floor() as usize).min(inp - 1);
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, T::from_f64_lossy(pos - lo as f64))
            })
            .collect()
    };
    let ys = coords(out_h, h);
    let xs = coords(out_w, w);
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
                let bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
                let v = top + (bottom - top) * fy;
                // Rounding can leave v a few ulps outside the source hull.
                let lo = at(y0, x0).min(at(y0, x1)).min(at(y1, x0)).min(at(y1, x1));
                let hi = at(y0, x0).max(at(y0, x1)).max(at(y1, x0)).max(at(y1, x1));
                out.push(v.max(lo).min(hi));
            }
        }
    }
    out
}

/// Corner-aligned bilinear resize; output stays inside the input's value range.
pub fn bilinear_resize<T: Scalar>(img: &ImageTensor<T>, out_h: usize, out_w: usize) -> Result<ImageTensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target {out_h}x{out_w}")));
    }
    let data = bilinear_resample(&img.data, img.height, img.width, img.channels, out_h, out_w);
    Ok(ImageTensor::from_raw(out_h, out_w, img.channels, data))
}

pub fn extract_clip<T: Scalar>(img: &ImageTensor<T>, region: ClipRegion) -> Result<ImageTensor<T>> {
    if !region.fits(img.height, img.width) {
        return Err(Error::OutOfBounds(format!("clip {region:?} outside {}x{} image", img.height, img.width)));
    }
    let c = img.channels;
    let mut data = Vec::with_capacity(region.size * region.size * c);
    for y in region.top..region.top + region.size {
        let start = (y * img.width + region.left) * c;
        data.extend_from_slice(&img.data[start..start + region.size * c]);
    }
    Ok(ImageTensor::from_raw(region.size, region.size, c, data))
}

/// Divides every value by the single maximum over all pixels and channels.
pub fn global_max_normalize<T: Scalar>(img: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    let max = img.max_value();
    if max <= T::zero() {
        return Err(Error::ZeroDenominator("global max of an all-zero image".into()));
    }
    let data = img.data.iter().map(|v| (*v / max).min(T::one())).collect();
    Ok(ImageTensor::from_raw(img.height, img.width, img.channels, data))
}

/// Reads an 8-bit RGB or grayscale PNG, scaling bytes by 1/255.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(Error::UnsupportedFormat { path: path.to_path_buf(), reason: "not a PNG file".into() });
    }
    let decoded = reader.decode().map_err(|source| Error::Codec { path: path.to_path_buf(), source })?;
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    let (channels, bytes) = match decoded.color() {
        ColorType::L8 => (1, decoded.into_luma8().into_raw()),
        ColorType::Rgb8 => (3, decoded.into_rgb8().into_raw()),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("color type {other:?}; expected 8-bit RGB or grayscale"),
            })
        }
    };
    let scale = T::from_f64_lossy(255.0);
    ImageTensor::new(h, w, channels, bytes.into_iter().map(|b| T::from_f64_lossy(b as f64) / scale).collect())
}

/// Quantizes `v` to a byte as `round(v·255)`, halves rounding up.
#[inline]
pub fn quantize<T: Scalar>(v: T) -> u8 {
    (v.as_f64() * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit PNG (grayscale for one channel, RGB for three).
pub fn save_image<T: Scalar>(img: &ImageTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width as u32, img.height as u32);
    let bytes: Vec<u8> = img.data.iter().map(|v| quantize(*v)).collect();
    let dynamic = match img.channels {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("buffer matches dimensions"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("buffer matches dimensions"),
        ),
        c => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("{c} channels; only 1 or 3 can be written"),
            })
        }
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    dynamic
        .write_to(&mut writer, image::ImageFormat::Png)
        .map_err(|source| Error::Codec { path: path.to_path_buf(), source })
}

/// Tiles images into a grid PNG-ready image (row-major, `cols` per row).
pub fn tile_grid<T: Scalar>(images: &[ImageTensor<T>], cols: usize) -> Result<ImageTensor<T>> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no images to tile".into()))?;
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (h, w, c) = first.shape();
    for img in images {
        first.ensure_same_shape(img)?;
    }
    let mut data = vec![T::zero(); rows * h * cols * w * c];
    let row_stride = cols * w * c;
    for (i, img) in images.iter().enumerate() {
        let (gy, gx) = (i / cols, i % cols);
        for y in 0..h {
            let dst = (gy * h + y) * row_stride + gx * w * c;
            data[dst..dst + w * c].copy_from_slice(&img.data[y * w * c..(y + 1) * w * c]);
        }
    }
    Ok(ImageTensor::from_raw(rows * h, cols * w, c, data))
}
