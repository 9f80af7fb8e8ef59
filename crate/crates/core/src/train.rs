//! Adversarial losses, the alternating optimization loop, monitors and
//! resumable checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expand::{Expander, ExpansionConfig};
use crate::image::{l2_distance, sum_squared_diff, ClipRegion, ImageTensor};
use crate::nets::{
    build_discriminator, build_generator, clip_nchw, images_to_nchw, load_networks, read_tensors, sample_latent,
    save_networks, unclip_nchw_add, write_tensors, ArchitectureConfig, DiscriminatorParams, GeneratorParams,
    TensorEntry,
};
use crate::nn::{Adam, AdamConfig, Gradients, Mode, Tensor};
use crate::rng::{rng_from, tag};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub batch_size: usize,
    pub learning_rate_g: f64,
    pub learning_rate_d: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Must equal the architecture's clip size.
    pub clip_size: usize,
    pub seed: u64,
    /// Epochs between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            batch_size: 64,
            learning_rate_g: 1e-4,
            learning_rate_d: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 500,
            steps_per_epoch: 50,
            clip_size: 64,
            seed: 0,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        if !(self.learning_rate_g >= 0.0 && self.learning_rate_d >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_epsilon > 0.0)
        {
            return bad("adam betas must lie in [0,1) and epsilon must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size {} < 2", self.batch_size));
        }
        Ok(())
    }

    fn adam_g(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate_g,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    fn adam_d(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate_d, ..self.adam_g() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    /// Batch mean of `d(I₀,x_g) + d(I₁,x_g)`.
    pub dist_term: f64,
    /// Batch max of `λ·|D(x̂_r) − D(x̂_g)| / d(x_r, x_g)`.
    pub lipschitz_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMonitor {
    records: Vec<MonitorRecord>,
}

const CSV_HEADER: &str = "step,loss_d,loss_g,dist_term,lipschitz_ratio";

impl TrainMonitor {
    pub fn records(&self) -> &[MonitorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: MonitorRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.step <= last.step {
                return Err(Error::InvalidArgument(format!("monitor step {} after {}", r.step, last.step)));
            }
        }
        let vals = [r.loss_d, r.loss_g, r.dist_term, r.lipschitz_ratio];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("monitor record {r:?}")));
        }
        self.records.push(r);
        Ok(())
    }

    /// Mean of `f` over records `[from, to)` given as fractions of the run.
    pub fn window_mean(&self, from: f64, to: f64, f: impl Fn(&MonitorRecord) -> f64) -> Option<f64> {
        let n = self.records.len();
        let a = (from * n as f64).floor() as usize;
        let b = ((to * n as f64).ceil() as usize).min(n);
        (b > a).then(|| self.records[a..b].iter().map(f).sum::<f64>() / (b - a) as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{},{},{},{},{}\n", r.step, r.loss_d, r.loss_g, r.dist_term, r.lipschitz_ratio));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Checkpoint("monitor csv header".into()));
        }
        let mut m = Self::default();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Checkpoint(format!("monitor csv line {line:?}")))
            };
            m.push(MonitorRecord {
                step: f[0].parse().map_err(|_| Error::Checkpoint(format!("monitor step in {line:?}")))?,
                loss_d: num(1)?,
                loss_g: num(2)?,
                dist_term: num(3)?,
                lipschitz_ratio: num(4)?,
            })?;
        }
        Ok(m)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }
}

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::ShapeMismatch(format!("{what}: lengths {a} and {b}")));
    }
    Ok(())
}

/// Negated batch mean of `Δ − λΔ²/(d₀+d₁)` with `Δ = D(x̂_r) − D(x̂_g)`.
pub fn discriminator_loss<T: Scalar>(d_real: &[T], d_fake: &[T], dist0: &[T], dist1: &[T], lambda: T) -> Result<T> {
    Ok(discriminator_loss_grad(d_real, d_fake, dist0, dist1, lambda)?.0)
}

/// Loss together with its gradients with respect to `d_real` and `d_fake`.
pub fn discriminator_loss_grad<T: Scalar>(
    d_real: &[T],
    d_fake: &[T],
    dist0: &[T],
    dist1: &[T],
    lambda: T,
) -> Result<(T, Vec<T>, Vec<T>)> {
    check_lengths(d_real.len(), d_fake.len(), "critic values")?;
    check_lengths(d_real.len(), dist0.len(), "distance d0")?;
    check_lengths(d_real.len(), dist1.len(), "distance d1")?;
    let b = T::from_f64_lossy(d_real.len() as f64);
    let two = T::from_f64_lossy(2.0);
    let mut total = T::zero();
    let mut g_real = Vec::with_capacity(d_real.len());
    for i in 0..d_real.len() {
        let w = dist0[i] + dist1[i];
        if !(w > T::zero()) {
            return Err(Error::ZeroDenominator(format!("d(I0,xg)+d(I1,xg) = {w} at sample {i}")));
        }
        let delta = d_real[i] - d_fake[i];
        total += delta - lambda * delta * delta / w;
        g_real.push(-(T::one() - two * lambda * delta / w) / b);
    }
    let g_fake = g_real.iter().map(|g| -*g).collect();
    Ok((-total / b, g_real, g_fake))
}

/// Batch mean of `D(x̂_r) − D(x̂_g)`.
pub fn generator_loss<T: Scalar>(d_real: &[T], d_fake_on_g: &[T]) -> Result<T> {
    check_lengths(d_real.len(), d_fake_on_g.len(), "critic values")?;
    let b = T::from_f64_lossy(d_real.len() as f64);
    Ok(d_real.iter().zip(d_fake_on_g).map(|(r, f)| *r - *f).sum::<T>() / b)
}

/// `λ·|d_real − d_fake| / d(x_r, x_g)`; at most 1 when the critic bound holds.
pub fn lipschitz_ratio<T: Scalar>(
    d_real: T,
    d_fake: T,
    x_r: &ImageTensor<T>,
    x_g: &ImageTensor<T>,
    lambda: T,
) -> Result<T> {
    let d = l2_distance(x_r, x_g)?;
    if !(d > T::zero()) {
        return Err(Error::ZeroDenominator("identical images in lipschitz ratio".into()));
    }
    Ok(lambda * (d_real - d_fake).abs() / d)
}

/// The two anchor images in network layout.
#[derive(Clone, Debug)]
pub struct Anchors<T> {
    pub i0: Vec<T>,
    pub i1: Vec<T>,
    pub size: usize,
}

impl<T: Scalar> Anchors<T> {
    pub fn new(i0: &ImageTensor<T>, i1: &ImageTensor<T>, arch: &ArchitectureConfig) -> Result<Self> {
        i0.ensure_same_shape(i1)?;
        let s = arch.image_size;
        if i0.shape() != (s, s, 3) {
            return Err(Error::ShapeMismatch(format!("pair is {:?}; architecture expects {s}x{s}x3", i0.shape())));
        }
        Ok(Self { i0: images_to_nchw(std::slice::from_ref(i0)), i1: images_to_nchw(std::slice::from_ref(i1)), size: s })
    }

    /// Per-sample `d(I₀,x)` and `d(I₁,x)` for an NCHW batch.
    pub fn distances(&self, batch: &[T]) -> (Vec<T>, Vec<T>) {
        let len = self.i0.len();
        batch.chunks_exact(len).map(|x| (sum_squared_diff(&self.i0, x), sum_squared_diff(&self.i1, x))).unzip()
    }
}

/// Loss, parameter gradients, real scores and fake scores.
pub type CriticStep<T> = (T, Gradients<T>, Vec<T>, Vec<T>);

/// Discriminator loss and parameter gradients on fixed clip batches
/// (training-mode normalization).
pub fn discriminator_loss_and_grads<T: Scalar>(
    d: &DiscriminatorParams<T>,
    real_clips: &[T],
    fake_clips: &[T],
    dist0: &[T],
    dist1: &[T],
    batch: usize,
    lambda: T,
) -> Result<CriticStep<T>> {
    let fr = d.net.forward(real_clips, batch, Mode::Train)?;
    let ff = d.net.forward(fake_clips, batch, Mode::Train)?;
    let (loss, g_real, g_fake) = discriminator_loss_grad(&fr.output, &ff.output, dist0, dist1, lambda)?;
    let mut grads = d.net.zero_grads();
    d.net.backward(&fr, &g_real, &mut grads, false);
    d.net.backward(&ff, &g_fake, &mut grads, false);
    Ok((loss, grads, fr.output, ff.output))
}

/// Generator loss `mean(d_real − D(clip(G(z))))` and generator gradients.
/// `d_real` only shifts the loss value.
pub fn generator_loss_and_grads<T: Scalar>(
    g: &GeneratorParams<T>,
    d: &DiscriminatorParams<T>,
    z: &[T],
    d_real: &[T],
    region: ClipRegion,
    batch: usize,
) -> Result<(T, Gradients<T>)> {
    let s = g.arch.image_size;
    let fg = g.net.forward(z, batch, Mode::Train)?;
    let clips = clip_nchw(&fg.output, batch, 3, s, region);
    let fd = d.net.forward(&clips, batch, Mode::Train)?;
    let loss = generator_loss(d_real, &fd.output)?;
    let dout = vec![-T::one() / T::from_f64_lossy(batch as f64); batch];
    let mut scratch = d.net.zero_grads();
    let dclip = d.net.backward(&fd, &dout, &mut scratch, true).expect("input gradient requested");
    let mut dimg = vec![T::zero(); fg.output.len()];
    unclip_nchw_add(&dclip, &mut dimg, s, region);
    let mut grads = g.net.zero_grads();
    g.net.backward(&fg, &dimg, &mut grads, false);
    Ok((loss, grads))
}

/// Parameters plus optimizer state; `step` counts completed updates.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub generator: GeneratorParams<T>,
    pub discriminator: DiscriminatorParams<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub step: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        let generator = build_generator(arch, seed)?;
        let discriminator = build_discriminator(arch, seed)?;
        let opt_g = Adam::new(&generator.net);
        let opt_d = Adam::new(&discriminator.net);
        Ok(Self { generator, discriminator, opt_g, opt_d, step: 0 })
    }
}

/// Uniform top-left corner for a clip of side `clip` in a `size`-sided image.
pub fn sample_region<R: Rng + ?Sized>(rng: &mut R, size: usize, clip: usize) -> ClipRegion {
    ClipRegion::new(rng.random_range(0..=size - clip), rng.random_range(0..=size - clip), clip)
}

fn finite_or<T: Scalar>(v: &[T], what: &str, step: u64) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {} at step {step}", v[i]))),
        None => Ok(()),
    }
}

/// One discriminator update followed by one generator update.
///
/// `real` is an NCHW batch of full training images. Real and fake clips share
/// one window per step; the generator update uses a fresh latent batch.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    state: &mut TrainState<T>,
    real: &[T],
    anchors: &Anchors<T>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<MonitorRecord> {
    let arch = state.generator.arch.clone();
    let (s, b) = (arch.image_size, cfg.batch_size);
    let img_len = 3 * s * s;
    if real.len() != b * img_len {
        return Err(Error::ShapeMismatch(format!("real batch of {} values for {b} images of {s}x{s}x3", real.len())));
    }
    let step = state.step;
    let lambda = T::from_f64_lossy(cfg.lambda);

    let z = sample_latent::<T, _>(rng, b, arch.latent_dim);
    let fg = state.generator.net.forward(&z, b, Mode::Train)?;
    state.generator.net.commit_stats(&fg);
    let fake = fg.output;
    let region = sample_region(rng, s, arch.clip_size);
    let real_clips = clip_nchw(real, b, 3, s, region);
    let fake_clips = clip_nchw(&fake, b, 3, s, region);
    let (d0, d1) = anchors.distances(&fake);

    let fr = state.discriminator.net.forward(&real_clips, b, Mode::Train)?;
    let ff = state.discriminator.net.forward(&fake_clips, b, Mode::Train)?;
    state.discriminator.net.commit_stats(&fr);
    state.discriminator.net.commit_stats(&ff);
    finite_or(&fr.output, "D(real)", step)?;
    finite_or(&ff.output, "D(fake)", step)?;
    let (loss_d, g_real, g_fake) = discriminator_loss_grad(&fr.output, &ff.output, &d0, &d1, lambda)?;
    let mut grads_d = state.discriminator.net.zero_grads();
    state.discriminator.net.backward(&fr, &g_real, &mut grads_d, false);
    state.discriminator.net.backward(&ff, &g_fake, &mut grads_d, false);

    let mut lip = T::zero();
    for i in 0..b {
        let d = sum_squared_diff(&real[i * img_len..(i + 1) * img_len], &fake[i * img_len..(i + 1) * img_len]);
        if d > T::zero() {
            lip = lip.max(lambda * (fr.output[i] - ff.output[i]).abs() / d);
        }
    }
    let dist_term = d0.iter().zip(&d1).map(|(a, c)| a.as_f64() + c.as_f64()).sum::<f64>() / b as f64;
    state.opt_d.step(&mut state.discriminator.net, &grads_d, &cfg.adam_d());

    let z2 = sample_latent::<T, _>(rng, b, arch.latent_dim);
    let fg2 = state.generator.net.forward(&z2, b, Mode::Train)?;
    state.generator.net.commit_stats(&fg2);
    let fake2_clips = clip_nchw(&fg2.output, b, 3, s, region);
    let fr2 = state.discriminator.net.forward(&real_clips, b, Mode::Train)?;
    let fd = state.discriminator.net.forward(&fake2_clips, b, Mode::Train)?;
    state.discriminator.net.commit_stats(&fr2);
    state.discriminator.net.commit_stats(&fd);
    finite_or(&fd.output, "D(G(z))", step)?;
    let loss_g = generator_loss(&fr2.output, &fd.output)?;
    let dout = vec![-T::one() / T::from_f64_lossy(b as f64); b];
    let mut scratch = state.discriminator.net.zero_grads();
    let dclip = state.discriminator.net.backward(&fd, &dout, &mut scratch, true).expect("input gradient");
    let mut dimg = vec![T::zero(); fg2.output.len()];
    unclip_nchw_add(&dclip, &mut dimg, s, region);
    let mut grads_g = state.generator.net.zero_grads();
    state.generator.net.backward(&fg2, &dimg, &mut grads_g, false);
    state.opt_g.step(&mut state.generator.net, &grads_g, &cfg.adam_g());

    state.step += 1;
    let record = MonitorRecord {
        step,
        loss_d: loss_d.as_f64(),
        loss_g: loss_g.as_f64(),
        dist_term,
        lipschitz_ratio: lip.as_f64(),
    };
    if ![record.loss_d, record.loss_g, record.dist_term, record.lipschitz_ratio].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("training record {record:?}")));
    }
    Ok(record)
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub generator: GeneratorParams<T>,
    pub discriminator: DiscriminatorParams<T>,
    pub monitor: TrainMonitor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StateFile {
    step: u64,
    epoch: usize,
    adam_t_g: u64,
    adam_t_d: u64,
    train: TrainConfig,
    expansion: ExpansionConfig,
    moments_g: Vec<TensorEntry>,
    moments_d: Vec<TensorEntry>,
}

/// Training loop over a lazily expanded set, resumable at epoch boundaries.
pub struct Trainer<'a, T> {
    expander: Expander<'a, T>,
    anchors: Anchors<T>,
    cfg: TrainConfig,
    expansion: ExpansionConfig,
    pub state: TrainState<T>,
    pub monitor: TrainMonitor,
    pub epoch: usize,
}

fn moments_as_tensors<T: Scalar>(net: &crate::nn::Network<T>, m: &[Vec<T>], tag: &str) -> Vec<Tensor<T>> {
    net.params()
        .iter()
        .zip(m)
        .map(|(p, v)| Tensor { name: format!("{}.{tag}", p.name), shape: p.shape.clone(), data: v.clone() })
        .collect()
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        i0: &'a ImageTensor<T>,
        i1: &'a ImageTensor<T>,
        expansion: &ExpansionConfig,
        arch: &ArchitectureConfig,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        arch.validate()?;
        if cfg.clip_size != arch.clip_size {
            return Err(Error::InvalidConfig(format!(
                "train.clip_size {} differs from arch.clip_size {}",
                cfg.clip_size, arch.clip_size
            )));
        }
        let anchors = Anchors::new(i0, i1, arch)?;
        Ok(Self {
            expander: Expander::new(i0, i1, expansion)?,
            anchors,
            cfg: cfg.clone(),
            expansion: expansion.clone(),
            state: TrainState::new(arch, cfg.seed)?,
            monitor: TrainMonitor::default(),
            epoch: 0,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn resume(i0: &'a ImageTensor<T>, i1: &'a ImageTensor<T>, dir: &Path) -> Result<Self> {
        let path = dir.join("state.json");
        if !path.exists() {
            return Err(Error::NotFound(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let st: StateFile = serde_json::from_str(&text)?;
        let (generator, discriminator) = load_networks::<T>(dir)?;
        let mut t = Self::new(i0, i1, &st.expansion, &generator.arch, &st.train)?;
        let restore = |net: &crate::nn::Network<T>, entries: &[TensorEntry], tt: u64| -> Result<Adam<T>> {
            let ts = read_tensors::<T>(dir, entries)?;
            let (m, v) = ts.split_at(ts.len() / 2);
            if m.len() != net.params().len() || v.len() != m.len() {
                return Err(Error::Checkpoint("optimizer moment count".into()));
            }
            for (a, p) in m.iter().chain(v).zip(net.params().iter().chain(net.params())) {
                if a.shape != p.shape {
                    return Err(Error::Checkpoint(format!("optimizer moment {} shape", a.name)));
                }
            }
            Ok(Adam {
                m: m.iter().map(|x| x.data.clone()).collect(),
                v: v.iter().map(|x| x.data.clone()).collect(),
                t: tt,
            })
        };
        t.state.opt_g = restore(&generator.net, &st.moments_g, st.adam_t_g)?;
        t.state.opt_d = restore(&discriminator.net, &st.moments_d, st.adam_t_d)?;
        t.state.generator = generator;
        t.state.discriminator = discriminator;
        t.state.step = st.step;
        t.epoch = st.epoch;
        let csv_path = dir.join("monitor.csv");
        let csv = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        t.monitor = TrainMonitor::from_csv(&csv)?;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Changes the epoch budget, e.g. to extend a resumed run.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.cfg.epochs = epochs;
    }

    /// Full-image NCHW batch for `(epoch, step-in-epoch)`.
    fn batch(&self, epoch: usize, within: usize) -> Result<Vec<T>> {
        let n = self.expander.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng_from(self.expansion.seed, &[tag::PERMUTE, epoch as u64]));
        let b = self.cfg.batch_size;
        let images = (0..b)
            .map(|j| self.expander.image(epoch as u64, perm[(within * b + j) % n]))
            .collect::<Result<Vec<_>>>()?;
        Ok(images_to_nchw(&images))
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        for within in 0..self.cfg.steps_per_epoch {
            let real = self.batch(self.epoch, within)?;
            let mut rng = rng_from(self.cfg.seed, &[tag::TRAIN_STEP, self.state.step]);
            let rec = train_step(&mut self.state, &real, &self.anchors, &self.cfg, &mut rng)?;
            self.monitor.push(rec)?;
        }
        self.epoch += 1;
        Ok(())
    }

    /// Runs until `cfg.epochs`, checkpointing into `dir` when given.
    pub fn run(&mut self, dir: Option<&Path>, mut on_epoch: impl FnMut(&Self)) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
            on_epoch(self);
            if let Some(d) = dir {
                let every = self.cfg.checkpoint_every;
                if (every > 0 && self.epoch.is_multiple_of(every)) || self.epoch == self.cfg.epochs {
                    self.save_checkpoint(d)?;
                }
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        save_networks(dir, &self.state.generator, &self.state.discriminator)?;
        let g = &self.state.generator.net;
        let d = &self.state.discriminator.net;
        let mut mg = moments_as_tensors(g, &self.state.opt_g.m, "m");
        mg.extend(moments_as_tensors(g, &self.state.opt_g.v, "v"));
        let mut md = moments_as_tensors(d, &self.state.opt_d.m, "m");
        md.extend(moments_as_tensors(d, &self.state.opt_d.v, "v"));
        let st = StateFile {
            step: self.state.step,
            epoch: self.epoch,
            adam_t_g: self.state.opt_g.t,
            adam_t_d: self.state.opt_d.t,
            train: self.cfg.clone(),
            expansion: self.expansion.clone(),
            moments_g: write_tensors(dir, "optimizer/generator", &mg)?,
            moments_d: write_tensors(dir, "optimizer/discriminator", &md)?,
        };
        let write = |name: &str, body: String| -> Result<()> {
            let p = dir.join(name);
            let mut f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&p, e))
        };
        write("state.json", serde_json::to_string_pretty(&st)?)?;
        write("monitor.csv", self.monitor.to_csv())
    }

    pub fn finish(self) -> TrainOutcome<T> {
        TrainOutcome { generator: self.state.generator, discriminator: self.state.discriminator, monitor: self.monitor }
    }
}

/// Runs `cfg.epochs × cfg.steps_per_epoch` training steps without checkpoints.
pub fn train<T: Scalar>(
    i0: &ImageTensor<T>,
    i1: &ImageTensor<T>,
    expansion: &ExpansionConfig,
    arch: &ArchitectureConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut t = Trainer::new(i0, i1, expansion, arch, cfg)?;
    t.run(None, |_| {})?;
    Ok(t.finish())
}
