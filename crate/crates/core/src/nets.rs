//! Generator and discriminator architectures, tensor layout helpers and
//! checkpoint storage.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClipRegion, ImageTensor};
use crate::nn::{LayerSpec, Mode, Network, Tensor, KERNEL, STRIDE};
use crate::rng::{rng_from, tag};
use crate::scalar::Scalar;

const INIT_STD: f64 = 0.02;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub latent_dim: usize,
    pub image_size: usize,
    pub clip_size: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub base_channels: usize,
    pub use_batch_norm: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            image_size: 128,
            clip_size: 64,
            kernel_size: KERNEL,
            stride: STRIDE,
            base_channels: 64,
            use_batch_norm: true,
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.kernel_size != KERNEL || self.stride != STRIDE {
            return bad(format!("kernel {} / stride {} unsupported; only 4 / 2", self.kernel_size, self.stride));
        }
        // 8 is the smallest side that still has one stride-2 layer above 4×4.
        for (name, v) in [("image_size", self.image_size), ("clip_size", self.clip_size)] {
            if !v.is_power_of_two() || v < 8 {
                return bad(format!("{name} {v} must be a power of two >= 8"));
            }
        }
        if self.clip_size > self.image_size {
            return bad(format!("clip_size {} exceeds image_size {}", self.clip_size, self.image_size));
        }
        if self.latent_dim == 0 || self.base_channels == 0 {
            return bad("latent_dim and base_channels must be positive".into());
        }
        Ok(())
    }

    /// Number of stride-2 layers between `size` and 4×4.
    pub fn depth(size: usize) -> usize {
        (size / 4).trailing_zeros() as usize
    }
}

/// Generator parameters together with their architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams<T> {
    pub arch: ArchitectureConfig,
    pub net: Network<T>,
}

/// Discriminator parameters together with their architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub arch: ArchitectureConfig,
    pub net: Network<T>,
}

pub fn generator_layers(cfg: &ArchitectureConfig) -> Vec<LayerSpec> {
    let top = 8 * cfg.base_channels;
    let ups = ArchitectureConfig::depth(cfg.image_size);
    let mut layers = vec![LayerSpec::Dense { inputs: cfg.latent_dim, outputs: top * 16 }];
    if cfg.use_batch_norm {
        layers.push(LayerSpec::BatchNorm { channels: top, spatial: 16 });
    }
    layers.push(LayerSpec::Relu);
    let mut cin = top;
    for i in 0..ups {
        let size = 4 << i;
        let last = i + 1 == ups;
        let cout = if last { 3 } else { (cin / 2).max(1) };
        layers.push(LayerSpec::ConvTranspose { cin, cout, size });
        if last {
            layers.push(LayerSpec::Sigmoid);
        } else {
            if cfg.use_batch_norm {
                layers.push(LayerSpec::BatchNorm { channels: cout, spatial: 4 * size * size });
            }
            layers.push(LayerSpec::Relu);
        }
        cin = cout;
    }
    layers
}

pub fn discriminator_layers(cfg: &ArchitectureConfig) -> Vec<LayerSpec> {
    let downs = ArchitectureConfig::depth(cfg.clip_size);
    let mut layers = Vec::new();
    let mut cin = 3;
    for i in 0..downs {
        let size = cfg.clip_size >> i;
        let cout = cfg.base_channels << i;
        layers.push(LayerSpec::Conv { cin, cout, size });
        if i > 0 && cfg.use_batch_norm {
            layers.push(LayerSpec::BatchNorm { channels: cout, spatial: (size / 2) * (size / 2) });
        }
        layers.push(LayerSpec::LeakyRelu { slope: LEAKY_SLOPE });
        cin = cout;
    }
    layers.push(LayerSpec::Dense { inputs: cin * 16, outputs: 1 });
    layers
}

/// Latent vectors drawn from `U[0,1]^latent_dim`, flattened batch-major.
pub fn sample_latent<T: Scalar, R: Rng + ?Sized>(rng: &mut R, batch: usize, latent_dim: usize) -> Vec<T> {
    (0..batch * latent_dim).map(|_| T::from_f64_lossy(rng.random::<f64>())).collect()
}

pub fn build_generator<T: Scalar>(cfg: &ArchitectureConfig, seed: u64) -> Result<GeneratorParams<T>> {
    cfg.validate()?;
    let net = Network::new(generator_layers(cfg), INIT_STD, &mut rng_from(seed, &[tag::GEN_INIT]))?;
    Ok(GeneratorParams { arch: cfg.clone(), net })
}

pub fn build_discriminator<T: Scalar>(cfg: &ArchitectureConfig, seed: u64) -> Result<DiscriminatorParams<T>> {
    cfg.validate()?;
    let net = Network::new(discriminator_layers(cfg), INIT_STD, &mut rng_from(seed, &[tag::DIS_INIT]))?;
    Ok(DiscriminatorParams { arch: cfg.clone(), net })
}

/// HWC images to one batch-major CHW buffer.
pub fn images_to_nchw<T: Scalar>(images: &[ImageTensor<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(images.iter().map(|i| i.data().len()).sum());
    for img in images {
        let (h, w, c) = img.shape();
        for ch in 0..c {
            for p in 0..h * w {
                out.push(img.data()[p * c + ch]);
            }
        }
    }
    out
}

/// Inverse of [`images_to_nchw`]; values are clamped into `[0, 1]`.
pub fn nchw_to_images<T: Scalar>(buf: &[T], batch: usize, c: usize, h: usize, w: usize) -> Vec<ImageTensor<T>> {
    let len = c * h * w;
    (0..batch)
        .map(|n| {
            let src = &buf[n * len..(n + 1) * len];
            let mut data = vec![T::zero(); len];
            for ch in 0..c {
                for p in 0..h * w {
                    data[p * c + ch] = src[ch * h * w + p].max(T::zero()).min(T::one());
                }
            }
            ImageTensor::from_raw(h, w, c, data)
        })
        .collect()
}

/// Cuts the same square window from every image of an NCHW batch.
pub fn clip_nchw<T: Scalar>(buf: &[T], batch: usize, c: usize, size: usize, region: ClipRegion) -> Vec<T> {
    let s = region.size;
    let mut out = Vec::with_capacity(batch * c * s * s);
    for plane in buf.chunks_exact(size * size).take(batch * c) {
        for y in region.top..region.top + s {
            out.extend_from_slice(&plane[y * size + region.left..y * size + region.left + s]);
        }
    }
    out
}

/// Adjoint of [`clip_nchw`]: adds clip gradients into a full-size buffer.
pub fn unclip_nchw_add<T: Scalar>(clip: &[T], full: &mut [T], size: usize, region: ClipRegion) {
    let s = region.size;
    for (src, plane) in clip.chunks_exact(s * s).zip(full.chunks_exact_mut(size * size)) {
        for (r, y) in (region.top..region.top + s).enumerate() {
            let dst = &mut plane[y * size + region.left..y * size + region.left + s];
            for (d, v) in dst.iter_mut().zip(&src[r * s..(r + 1) * s]) {
                *d += *v;
            }
        }
    }
}

/// Generates one image per latent vector in evaluation mode.
pub fn generate<T: Scalar>(params: &GeneratorParams<T>, z: &[Vec<T>]) -> Result<Vec<ImageTensor<T>>> {
    let dim = params.arch.latent_dim;
    if z.is_empty() {
        return Err(Error::InvalidArgument("empty latent batch".into()));
    }
    if let Some(bad) = z.iter().find(|v| v.len() != dim) {
        return Err(Error::ShapeMismatch(format!("latent vector of length {} (expected {dim})", bad.len())));
    }
    let flat: Vec<T> = z.iter().flatten().copied().collect();
    let out = params.net.forward(&flat, z.len(), Mode::Eval)?;
    let s = params.arch.image_size;
    Ok(nchw_to_images(&out.output, z.len(), 3, s, s))
}

/// Critic values for a batch of clips in evaluation mode.
pub fn discriminate<T: Scalar>(params: &DiscriminatorParams<T>, clips: &[ImageTensor<T>]) -> Result<Vec<T>> {
    let s = params.arch.clip_size;
    if clips.is_empty() {
        return Err(Error::InvalidArgument("empty clip batch".into()));
    }
    if let Some(bad) = clips.iter().find(|c| c.shape() != (s, s, 3)) {
        return Err(Error::ShapeMismatch(format!("clip shape {:?}, expected {s}x{s}x3", bad.shape())));
    }
    Ok(params.net.forward(&images_to_nchw(clips), clips.len(), Mode::Eval)?.output)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub dtype: String,
    pub arch: ArchitectureConfig,
    pub generator: NetworkDescriptor,
    pub discriminator: NetworkDescriptor,
}

/// Writes each tensor as raw little-endian values under `dir/sub`.
pub fn write_tensors<T: Scalar>(dir: &Path, sub: &str, tensors: &[Tensor<T>]) -> Result<Vec<TensorEntry>> {
    let folder = dir.join(sub);
    fs::create_dir_all(&folder).map_err(|e| Error::io(&folder, e))?;
    tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let file = format!("{sub}/{i:03}_{}.bin", t.name);
            let mut bytes = Vec::with_capacity(t.data.len() * T::BYTES);
            t.data.iter().for_each(|v| v.write_le(&mut bytes));
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(TensorEntry { name: t.name.clone(), shape: t.shape.clone(), file })
        })
        .collect()
}

pub fn read_tensors<T: Scalar>(dir: &Path, entries: &[TensorEntry]) -> Result<Vec<Tensor<T>>> {
    entries
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let n: usize = e.shape.iter().product();
            if bytes.len() != n * T::BYTES {
                return Err(Error::Checkpoint(format!(
                    "{}: {} bytes for shape {:?} of {}",
                    e.file,
                    bytes.len(),
                    e.shape,
                    T::DTYPE
                )));
            }
            let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
            Ok(Tensor { name: e.name.clone(), shape: e.shape.clone(), data })
        })
        .collect()
}

fn describe<T: Scalar>(dir: &Path, sub: &str, net: &Network<T>) -> Result<NetworkDescriptor> {
    Ok(NetworkDescriptor {
        layers: net.specs().to_vec(),
        params: write_tensors(dir, &format!("{sub}/params"), net.params())?,
        buffers: write_tensors(dir, &format!("{sub}/buffers"), net.buffers())?,
    })
}

fn restore<T: Scalar>(dir: &Path, d: &NetworkDescriptor) -> Result<Network<T>> {
    Network::from_parts(d.layers.clone(), read_tensors(dir, &d.params)?, read_tensors(dir, &d.buffers)?)
}

/// Stores both networks as `arch.json` plus one binary file per tensor.
pub fn save_networks<T: Scalar>(dir: &Path, g: &GeneratorParams<T>, d: &DiscriminatorParams<T>) -> Result<()> {
    if g.arch != d.arch {
        return Err(Error::InvalidArgument("generator and discriminator architectures differ".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let desc = CheckpointDescriptor {
        dtype: T::DTYPE.to_string(),
        arch: g.arch.clone(),
        generator: describe(dir, "generator", &g.net)?,
        discriminator: describe(dir, "discriminator", &d.net)?,
    };
    let path = dir.join("arch.json");
    fs::write(&path, serde_json::to_string_pretty(&desc)?).map_err(|e| Error::io(&path, e))
}

pub fn load_networks<T: Scalar>(dir: &Path) -> Result<(GeneratorParams<T>, DiscriminatorParams<T>)> {
    let path = dir.join("arch.json");
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let desc: CheckpointDescriptor = serde_json::from_str(&text)?;
    if desc.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!("checkpoint holds {}, requested {}", desc.dtype, T::DTYPE)));
    }
    desc.arch.validate()?;
    if desc.generator.layers != generator_layers(&desc.arch)
        || desc.discriminator.layers != discriminator_layers(&desc.arch)
    {
        return Err(Error::Checkpoint("layer list does not match the architecture config".into()));
    }
    let g = GeneratorParams { arch: desc.arch.clone(), net: restore(dir, &desc.generator)? };
    let d = DiscriminatorParams { arch: desc.arch, net: restore(dir, &desc.discriminator)? };
    Ok((g, d))
}
