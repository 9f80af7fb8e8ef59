//! Minimal feed-forward networks with hand-written backpropagation.
//!
//! Activations are batch-major `NCHW` (dense layers use `N×F`). Convolutions
//! are fixed at kernel 4, stride 2, padding 1 and run as im2col + gemm; the
//! transposed convolution is the adjoint of the same map.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;
const TAPS: usize = KERNEL * KERNEL;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Square input of side `size`; output side `size / 2`.
    Conv {
        cin: usize,
        cout: usize,
        size: usize,
    },
    /// Square input of side `size`; output side `2 * size`.
    ConvTranspose {
        cin: usize,
        cout: usize,
        size: usize,
    },
    BatchNorm {
        channels: usize,
        spatial: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
}

impl LayerSpec {
    /// Per-sample input and output lengths, or `None` for shape-preserving layers.
    fn io_len(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
            LayerSpec::Conv { cin, cout, size } => Some((cin * size * size, cout * (size / 2) * (size / 2))),
            LayerSpec::ConvTranspose { cin, cout, size } => Some((cin * size * size, cout * 4 * size * size)),
            LayerSpec::BatchNorm { channels, spatial } => Some((channels * spatial, channels * spatial)),
            _ => None,
        }
    }

    /// Names and shapes of the learnable tensors.
    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![("weight", vec![outputs, inputs]), ("bias", vec![outputs])],
            LayerSpec::Conv { cin, cout, .. } => {
                vec![("weight", vec![cout, cin, KERNEL, KERNEL]), ("bias", vec![cout])]
            }
            LayerSpec::ConvTranspose { cin, cout, .. } => {
                vec![("weight", vec![cin, cout, KERNEL, KERNEL]), ("bias", vec![cout])]
            }
            LayerSpec::BatchNorm { channels, .. } => vec![("gamma", vec![channels]), ("beta", vec![channels])],
            _ => Vec::new(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvTranspose { .. } => "convt",
            LayerSpec::BatchNorm { .. } => "bn",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "lrelu",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }
}

/// Named array with a recorded shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name, shape, data: vec![T::zero(); n] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers.
    Train,
    /// Running statistics in normalization layers.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    specs: Vec<LayerSpec>,
    /// Index of each layer's first parameter in `params`.
    offsets: Vec<usize>,
    params: Vec<Tensor<T>>,
    /// Running mean and variance, two entries per normalization layer.
    buffers: Vec<Tensor<T>>,
}

enum LayerCache<T> {
    None,
    Norm { xhat: Vec<T>, inv_std: Vec<T>, mean: Vec<T>, var: Vec<T> },
}

/// Activations retained for the backward pass.
pub struct Forward<T> {
    pub output: Vec<T>,
    inputs: Vec<Vec<T>>,
    caches: Vec<LayerCache<T>>,
    batch: usize,
    mode: Mode,
}

impl<T> Forward<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

pub type Gradients<T> = Vec<Vec<T>>;

impl<T: Scalar> Network<T> {
    /// Builds a network with weights from `N(0, std)`, zero biases, unit scales.
    pub fn new<R: Rng + ?Sized>(specs: Vec<LayerSpec>, std: f64, rng: &mut R) -> Result<Self> {
        let mut prev_out: Option<usize> = None;
        for (i, s) in specs.iter().enumerate() {
            if let Some((inp, out)) = s.io_len() {
                if inp == 0 || out == 0 {
                    return Err(Error::InvalidConfig(format!("layer {i} ({}) has an empty shape", s.kind())));
                }
                if let Some(p) = prev_out {
                    if p != inp {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i} ({}) expects {inp} inputs, previous layer gives {p}",
                            s.kind()
                        )));
                    }
                }
                prev_out = Some(out);
            }
            if let LayerSpec::Conv { size, .. } = s {
                if size % 2 != 0 || *size < 2 {
                    return Err(Error::InvalidConfig(format!("conv input side {size} must be even")));
                }
            }
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut offsets = Vec::with_capacity(specs.len());
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            offsets.push(params.len());
            for (pname, shape) in s.param_shapes() {
                let mut t = Tensor::zeros(format!("l{i}.{}.{pname}", s.kind()), shape);
                match pname {
                    "weight" => t.data.iter_mut().for_each(|v| *v = T::from_f64_lossy(normal.sample(rng))),
                    "gamma" => t.data.iter_mut().for_each(|v| *v = T::one()),
                    _ => {}
                }
                params.push(t);
            }
            if let LayerSpec::BatchNorm { channels, .. } = s {
                buffers.push(Tensor::zeros(format!("l{i}.bn.running_mean"), vec![*channels]));
                let mut var = Tensor::zeros(format!("l{i}.bn.running_var"), vec![*channels]);
                var.data.iter_mut().for_each(|v| *v = T::one());
                buffers.push(var);
            }
        }
        Ok(Self { specs, offsets, params, buffers })
    }

    /// Reassembles a network from stored tensors, validating every shape.
    pub fn from_parts(specs: Vec<LayerSpec>, params: Vec<Tensor<T>>, buffers: Vec<Tensor<T>>) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(specs, 1.0, &mut rng)?;
        let check = |want: &[Tensor<T>], got: &[Tensor<T>], what: &str| -> Result<()> {
            if want.len() != got.len() {
                return Err(Error::Checkpoint(format!("{what}: expected {} tensors, got {}", want.len(), got.len())));
            }
            for (w, g) in want.iter().zip(got) {
                if w.shape != g.shape || g.data.len() != w.data.len() {
                    return Err(Error::Checkpoint(format!("{what} {}: shape {:?} vs {:?}", w.name, w.shape, g.shape)));
                }
                if g.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("{what} {}", w.name)));
                }
            }
            Ok(())
        };
        check(&net.params, &params, "parameter")?;
        check(&net.buffers, &buffers, "buffer")?;
        net.params = params;
        net.buffers = buffers;
        Ok(net)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Tensor<T>] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub fn input_len(&self) -> usize {
        self.specs.iter().find_map(|s| s.io_len()).map(|(i, _)| i).unwrap_or(0)
    }

    pub fn output_len(&self) -> usize {
        self.specs.iter().rev().find_map(|s| s.io_len()).map(|(_, o)| o).unwrap_or(0)
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        self.params.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub fn forward(&self, x: &[T], batch: usize, mode: Mode) -> Result<Forward<T>> {
        if batch == 0 || x.len() != batch * self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "network input of length {} for batch {batch} × {}",
                x.len(),
                self.input_len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.specs.len());
        let mut caches = Vec::with_capacity(self.specs.len());
        let mut cur = x.to_vec();
        let mut bn_index = 0;
        for (i, spec) in self.specs.iter().enumerate() {
            let p = &self.params[self.offsets[i]..];
            let (out, cache) = match *spec {
                LayerSpec::Dense { inputs: fi, outputs: fo } => {
                    (dense_forward(&cur, batch, fi, fo, &p[0].data, &p[1].data), LayerCache::None)
                }
                LayerSpec::Conv { cin, cout, size } => {
                    (conv_forward(&cur, batch, cin, cout, size, &p[0].data, &p[1].data), LayerCache::None)
                }
                LayerSpec::ConvTranspose { cin, cout, size } => {
                    (convt_forward(&cur, batch, cin, cout, size, &p[0].data, &p[1].data), LayerCache::None)
                }
                LayerSpec::BatchNorm { channels, spatial } => {
                    let running = (&self.buffers[2 * bn_index].data, &self.buffers[2 * bn_index + 1].data);
                    bn_index += 1;
                    bn_forward(&cur, batch, channels, spatial, &p[0].data, &p[1].data, mode, running)
                }
                LayerSpec::Relu => (cur.iter().map(|&v| v.max(T::zero())).collect(), LayerCache::None),
                LayerSpec::LeakyRelu { slope } => {
                    let s = T::from_f64_lossy(slope);
                    (cur.iter().map(|&v| if v > T::zero() { v } else { v * s }).collect(), LayerCache::None)
                }
                LayerSpec::Sigmoid => (cur.iter().map(|&v| sigmoid(v)).collect(), LayerCache::None),
            };
            inputs.push(cur);
            caches.push(cache);
            cur = out;
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(Forward { output: cur, inputs, caches, batch, mode })
    }

    /// Parameter gradients accumulated into `grads`; returns the input gradient
    /// when `want_input` is set.
    pub fn backward(&self, fwd: &Forward<T>, dout: &[T], grads: &mut Gradients<T>, want_input: bool) -> Option<Vec<T>> {
        assert_eq!(dout.len(), fwd.output.len(), "output gradient length");
        let batch = fwd.batch;
        let mut g = dout.to_vec();
        for i in (0..self.specs.len()).rev() {
            let x = &fwd.inputs[i];
            let off = self.offsets[i];
            let need_dx = want_input || i > 0;
            g = match self.specs[i] {
                LayerSpec::Dense { inputs: fi, outputs: fo } => {
                    let (gw, rest) = grads[off..].split_first_mut().expect("dense weight grad");
                    dense_backward(x, &g, batch, fi, fo, &self.params[off].data, gw, &mut rest[0], need_dx)
                }
                LayerSpec::Conv { cin, cout, size } => {
                    let (gw, rest) = grads[off..].split_first_mut().expect("conv weight grad");
                    conv_backward(x, &g, batch, cin, cout, size, &self.params[off].data, gw, &mut rest[0], need_dx)
                }
                LayerSpec::ConvTranspose { cin, cout, size } => {
                    let (gw, rest) = grads[off..].split_first_mut().expect("convt weight grad");
                    convt_backward(x, &g, batch, cin, cout, size, &self.params[off].data, gw, &mut rest[0], need_dx)
                }
                LayerSpec::BatchNorm { channels, spatial } => {
                    let LayerCache::Norm { xhat, inv_std, .. } = &fwd.caches[i] else {
                        unreachable!("normalization cache")
                    };
                    let (gg, rest) = grads[off..].split_first_mut().expect("bn gamma grad");
                    bn_backward(
                        &g,
                        xhat,
                        inv_std,
                        batch,
                        channels,
                        spatial,
                        &self.params[off].data,
                        gg,
                        &mut rest[0],
                        fwd.mode,
                    )
                }
                LayerSpec::Relu => g.iter().zip(x).map(|(&d, &v)| if v > T::zero() { d } else { T::zero() }).collect(),
                LayerSpec::LeakyRelu { slope } => {
                    let s = T::from_f64_lossy(slope);
                    g.iter().zip(x).map(|(&d, &v)| if v > T::zero() { d } else { d * s }).collect()
                }
                LayerSpec::Sigmoid => {
                    let y = if i + 1 < self.specs.len() { &fwd.inputs[i + 1] } else { &fwd.output };
                    g.iter().zip(y).map(|(&d, &s)| d * s * (T::one() - s)).collect()
                }
            };
        }
        want_input.then_some(g)
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// averages.
    pub fn commit_stats(&mut self, fwd: &Forward<T>) {
        if fwd.mode != Mode::Train {
            return;
        }
        let m = T::from_f64_lossy(BN_MOMENTUM);
        let mut bn_index = 0;
        for (spec, cache) in self.specs.iter().zip(&fwd.caches) {
            if let (LayerSpec::BatchNorm { spatial, .. }, LayerCache::Norm { mean, var, .. }) = (spec, cache) {
                let n = (fwd.batch * spatial) as f64;
                let unbias = T::from_f64_lossy(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
                for (r, &b) in self.buffers[2 * bn_index].data.iter_mut().zip(mean) {
                    *r = (T::one() - m) * *r + m * b;
                }
                for (r, &b) in self.buffers[2 * bn_index + 1].data.iter_mut().zip(var) {
                    *r = (T::one() - m) * *r + m * b * unbias;
                }
                bn_index += 1;
            }
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn dense_forward<T: Scalar>(x: &[T], batch: usize, fi: usize, fo: usize, w: &[T], b: &[T]) -> Vec<T> {
    let mut out: Vec<T> = (0..batch).flat_map(|_| b.iter().copied()).collect();
    // out(B×fo) += x(B×fi) · wᵀ
    T::gemm(batch, fi, fo, T::one(), x, fi as isize, 1, w, 1, fi as isize, T::one(), &mut out, fo as isize, 1);
    out
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<T: Scalar>(
    x: &[T],
    dout: &[T],
    batch: usize,
    fi: usize,
    fo: usize,
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    need_dx: bool,
) -> Vec<T> {
    // gw(fo×fi) += doutᵀ · x
    T::gemm(fo, batch, fi, T::one(), dout, 1, fo as isize, x, fi as isize, 1, T::one(), gw, fi as isize, 1);
    for row in dout.chunks_exact(fo) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += *d;
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); batch * fi];
    T::gemm(batch, fo, fi, T::one(), dout, fo as isize, 1, w, fi as isize, 1, T::zero(), &mut dx, fi as isize, 1);
    dx
}

/// `col[(c·16 + ky·4 + kx), oy·wo + ox] = x[c, 2·oy − 1 + ky, 2·ox − 1 + kx]` (zero outside).
fn im2col<T: Scalar>(x: &[T], c: usize, size: usize, col: &mut [T]) {
    let o = size / 2;
    let plane = o * o;
    for ch in 0..c {
        let src = &x[ch * size * size..(ch + 1) * size * size];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[(ch * TAPS + ky * KERNEL + kx) * plane..][..plane];
                for oy in 0..o {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    let dst = &mut row[oy * o..(oy + 1) * o];
                    if iy < 0 || iy >= size as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * size..(iy as usize + 1) * size];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        *d = if ix < 0 || ix >= size as isize { T::zero() } else { line[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` into `x`.
fn col2im<T: Scalar>(col: &[T], c: usize, size: usize, x: &mut [T]) {
    let o = size / 2;
    let plane = o * o;
    for ch in 0..c {
        let dst = &mut x[ch * size * size..(ch + 1) * size * size];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[(ch * TAPS + ky * KERNEL + kx) * plane..][..plane];
                for oy in 0..o {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= size as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * size..(iy as usize + 1) * size];
                    for ox in 0..o {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix >= 0 && ix < size as isize {
                            line[ix as usize] += row[oy * o + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(x: &[T], batch: usize, cin: usize, cout: usize, size: usize, w: &[T], b: &[T]) -> Vec<T> {
    let o = size / 2;
    let plane = o * o;
    let kdim = cin * TAPS;
    let mut col = vec![T::zero(); kdim * plane];
    let mut out = vec![T::zero(); batch * cout * plane];
    for n in 0..batch {
        im2col(&x[n * cin * size * size..(n + 1) * cin * size * size], cin, size, &mut col);
        let y = &mut out[n * cout * plane..(n + 1) * cout * plane];
        for (ch, bias) in b.iter().enumerate() {
            y[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = *bias);
        }
        T::gemm(
            cout,
            kdim,
            plane,
            T::one(),
            w,
            kdim as isize,
            1,
            &col,
            plane as isize,
            1,
            T::one(),
            y,
            plane as isize,
            1,
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    x: &[T],
    dout: &[T],
    batch: usize,
    cin: usize,
    cout: usize,
    size: usize,
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    need_dx: bool,
) -> Vec<T> {
    let o = size / 2;
    let plane = o * o;
    let kdim = cin * TAPS;
    let in_len = cin * size * size;
    let mut col = vec![T::zero(); kdim * plane];
    let mut dcol = vec![T::zero(); kdim * plane];
    let mut dx = if need_dx { vec![T::zero(); batch * in_len] } else { Vec::new() };
    for n in 0..batch {
        let d = &dout[n * cout * plane..(n + 1) * cout * plane];
        im2col(&x[n * in_len..(n + 1) * in_len], cin, size, &mut col);
        // gw(cout×kdim) += d · colᵀ
        T::gemm(
            cout,
            plane,
            kdim,
            T::one(),
            d,
            plane as isize,
            1,
            &col,
            1,
            plane as isize,
            T::one(),
            gw,
            kdim as isize,
            1,
        );
        for (ch, g) in gb.iter_mut().enumerate() {
            *g += d[ch * plane..(ch + 1) * plane].iter().copied().sum();
        }
        if need_dx {
            // dcol(kdim×plane) = wᵀ · d
            T::gemm(
                kdim,
                cout,
                plane,
                T::one(),
                w,
                1,
                kdim as isize,
                d,
                plane as isize,
                1,
                T::zero(),
                &mut dcol,
                plane as isize,
                1,
            );
            col2im(&dcol, cin, size, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    dx
}

fn convt_forward<T: Scalar>(x: &[T], batch: usize, cin: usize, cout: usize, size: usize, w: &[T], b: &[T]) -> Vec<T> {
    let big = size * 2;
    let plane = size * size;
    let kdim = cout * TAPS;
    let out_len = cout * big * big;
    let mut col = vec![T::zero(); kdim * plane];
    let mut out = vec![T::zero(); batch * out_len];
    for n in 0..batch {
        let xs = &x[n * cin * plane..(n + 1) * cin * plane];
        // col(kdim×plane) = wᵀ · x, with w stored cin×kdim
        T::gemm(
            kdim,
            cin,
            plane,
            T::one(),
            w,
            1,
            kdim as isize,
            xs,
            plane as isize,
            1,
            T::zero(),
            &mut col,
            plane as isize,
            1,
        );
        let y = &mut out[n * out_len..(n + 1) * out_len];
        for (ch, bias) in b.iter().enumerate() {
            y[ch * big * big..(ch + 1) * big * big].iter_mut().for_each(|v| *v = *bias);
        }
        col2im(&col, cout, big, y);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn convt_backward<T: Scalar>(
    x: &[T],
    dout: &[T],
    batch: usize,
    cin: usize,
    cout: usize,
    size: usize,
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    need_dx: bool,
) -> Vec<T> {
    let big = size * 2;
    let plane = size * size;
    let kdim = cout * TAPS;
    let out_len = cout * big * big;
    let mut dcol = vec![T::zero(); kdim * plane];
    let mut dx = if need_dx { vec![T::zero(); batch * cin * plane] } else { Vec::new() };
    for n in 0..batch {
        let d = &dout[n * out_len..(n + 1) * out_len];
        for (ch, g) in gb.iter_mut().enumerate() {
            *g += d[ch * big * big..(ch + 1) * big * big].iter().copied().sum();
        }
        im2col(d, cout, big, &mut dcol);
        let xs = &x[n * cin * plane..(n + 1) * cin * plane];
        // gw(cin×kdim) += x · dcolᵀ
        T::gemm(
            cin,
            plane,
            kdim,
            T::one(),
            xs,
            plane as isize,
            1,
            &dcol,
            1,
            plane as isize,
            T::one(),
            gw,
            kdim as isize,
            1,
        );
        if need_dx {
            let dxs = &mut dx[n * cin * plane..(n + 1) * cin * plane];
            T::gemm(
                cin,
                kdim,
                plane,
                T::one(),
                w,
                kdim as isize,
                1,
                &dcol,
                plane as isize,
                1,
                T::zero(),
                dxs,
                plane as isize,
                1,
            );
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn bn_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    c: usize,
    s: usize,
    gamma: &[T],
    beta: &[T],
    mode: Mode,
    running: (&Vec<T>, &Vec<T>),
) -> (Vec<T>, LayerCache<T>) {
    let count = T::from_f64_lossy((batch * s) as f64);
    let eps = T::from_f64_lossy(BN_EPS);
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for n in 0..batch {
                    acc += x[(n * c + ch) * s..(n * c + ch + 1) * s].iter().copied().sum();
                }
                let m = acc / count;
                let mut sq = T::zero();
                for n in 0..batch {
                    sq += x[(n * c + ch) * s..(n * c + ch + 1) * s].iter().map(|&v| (v - m) * (v - m)).sum();
                }
                mean[ch] = m;
                var[ch] = sq / count;
            }
            (mean, var)
        }
        Mode::Eval => (running.0.clone(), running.1.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for n in 0..batch {
        for ch in 0..c {
            let r = (n * c + ch) * s..(n * c + ch + 1) * s;
            for ((h, o), &v) in xhat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&x[r]) {
                *h = (v - mean[ch]) * inv_std[ch];
                *o = gamma[ch] * *h + beta[ch];
            }
        }
    }
    (y, LayerCache::Norm { xhat, inv_std, mean, var })
}

#[allow(clippy::too_many_arguments)]
fn bn_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    batch: usize,
    c: usize,
    s: usize,
    gamma: &[T],
    ggamma: &mut [T],
    gbeta: &mut [T],
    mode: Mode,
) -> Vec<T> {
    let count = T::from_f64_lossy((batch * s) as f64);
    let mut dx = vec![T::zero(); dy.len()];
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for n in 0..batch {
            let r = (n * c + ch) * s..(n * c + ch + 1) * s;
            for (&d, &h) in dy[r.clone()].iter().zip(&xhat[r]) {
                sum_dy += d;
                sum_dy_xhat += d * h;
            }
        }
        ggamma[ch] += sum_dy_xhat;
        gbeta[ch] += sum_dy;
        let k = gamma[ch] * inv_std[ch];
        for n in 0..batch {
            let r = (n * c + ch) * s..(n * c + ch + 1) * s;
            for ((o, &d), &h) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&xhat[r]) {
                *o = match mode {
                    Mode::Train => k * (d - sum_dy / count - h * sum_dy_xhat / count),
                    Mode::Eval => k * d,
                };
            }
        }
    }
    dx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// First and second moment estimates per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>) -> Self {
        Self { m: net.zero_grads(), v: net.zero_grads(), t: 0 }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, cfg: &AdamConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        // Bias corrections folded into the step size and epsilon.
        let step = T::from_f64_lossy(cfg.learning_rate * c2.sqrt() / c1);
        let eps = T::from_f64_lossy(cfg.epsilon * c2.sqrt());
        let (b1, b2) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
        for (((p, g), m), v) in net.params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *p -= step * *m / (v.sqrt() + eps);
            }
        }
    }
}
