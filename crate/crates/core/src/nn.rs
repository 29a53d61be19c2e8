//! The perceptual scorer: strided, same-padded convolutions with ReLU, one
//! hidden dense layer, and a sigmoid head producing a score in (0, 1).
//!
//! Parameters are stored as `f32` (the on-disk precision) in one flat vector;
//! activations and gradients are computed in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{MelSpectrogram, N_FRAMES, N_MELS};

pub const MODEL_MAGIC: [u8; 4] = *b"RRSC";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_DROPOUT: f64 = 0.5;
/// Scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` so they stay strictly
/// inside (0, 1) even when the logit saturates.
pub const SCORE_EPS: f64 = 1e-12;

const KIND_INPUT: u8 = 0;
const KIND_CONV: u8 = 1;
const KIND_DENSE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// `(rows, cols)` of the input plane.
    pub input: (usize, usize),
    pub convs: Vec<ConvSpec>,
    /// Width of the hidden dense layer.
    pub dense: usize,
}

impl Architecture {
    /// Five 7x7 stride-5 layers of 16 filters on a 96x500 mel plane, then a
    /// 256-unit dense layer.
    pub fn standard() -> Self {
        let conv = ConvSpec {
            filters: 16,
            kernel: (7, 7),
            stride: (5, 5),
        };
        Self {
            input: (N_MELS, N_FRAMES),
            convs: vec![conv; 5],
            dense: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.0 == 0 || self.input.1 == 0 {
            return Err(Error::InvalidArchitecture("empty input"));
        }
        if self.dense == 0 {
            return Err(Error::InvalidArchitecture("dense layer has no units"));
        }
        for c in &self.convs {
            if c.filters == 0
                || c.kernel.0 == 0
                || c.kernel.1 == 0
                || c.stride.0 == 0
                || c.stride.1 == 0
            {
                return Err(Error::InvalidArchitecture("zero-sized convolution"));
            }
        }
        Ok(())
    }

    /// `(channels, rows, cols)` after each convolution.
    pub fn feature_shapes(&self) -> Vec<(usize, usize, usize)> {
        self.layout()
            .0
            .iter()
            .map(|g| (g.out_c, g.out_h, g.out_w))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout().2.b_off + 1
    }

    fn layout(&self) -> (Vec<ConvGeom>, DenseGeom, DenseGeom) {
        let (mut c, mut h, mut w) = (1, self.input.0, self.input.1);
        let mut off = 0;
        let mut convs = Vec::with_capacity(self.convs.len());
        for spec in &self.convs {
            let (out_h, pad_h) = same_padding(h, spec.kernel.0, spec.stride.0);
            let (out_w, pad_w) = same_padding(w, spec.kernel.1, spec.stride.1);
            let w_len = spec.filters * c * spec.kernel.0 * spec.kernel.1;
            convs.push(ConvGeom {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: spec.filters,
                out_h,
                out_w,
                kh: spec.kernel.0,
                kw: spec.kernel.1,
                sh: spec.stride.0,
                sw: spec.stride.1,
                pad_h,
                pad_w,
                w_off: off,
                b_off: off + w_len,
            });
            off += w_len + spec.filters;
            (c, h, w) = (spec.filters, out_h, out_w);
        }
        let flat = c * h * w;
        let hidden = DenseGeom {
            inputs: flat,
            outputs: self.dense,
            w_off: off,
            b_off: off + flat * self.dense,
        };
        off = hidden.b_off + self.dense;
        let head = DenseGeom {
            inputs: self.dense,
            outputs: 1,
            w_off: off,
            b_off: off + self.dense,
        };
        (convs, hidden, head)
    }
}

/// Output length `ceil(n / stride)` and leading pad for "same" padding; any
/// odd total pad puts the extra cell after the input.
fn same_padding(n: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = n.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(n);
    (out, total / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad_h: usize,
    pad_w: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvGeom {
    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Input row for output row `oy` and kernel row `ky`, if inside the plane.
    /// Kernel taps `lo..hi` that land inside the input for output row `oy`,
    /// and the input row of tap `lo`.
    fn row_taps(&self, oy: usize) -> (usize, usize, usize) {
        taps(oy * self.sh, self.pad_h, self.kh, self.in_h)
    }

    fn col_taps(&self, ox: usize) -> (usize, usize, usize) {
        taps(ox * self.sw, self.pad_w, self.kw, self.in_w)
    }
}

fn taps(origin: usize, pad: usize, k: usize, n: usize) -> (usize, usize, usize) {
    let lo = pad.saturating_sub(origin).min(k);
    let hi = (n + pad).saturating_sub(origin).min(k).max(lo);
    (lo, hi, (origin + lo).saturating_sub(pad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DenseGeom {
    inputs: usize,
    outputs: usize,
    w_off: usize,
    b_off: usize,
}

/// Inverted-dropout multipliers (0 or `1 / (1 - p)`) for every hidden unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    conv: Vec<Vec<f64>>,
    hidden: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    conv_pre: Vec<Vec<f64>>,
    conv_out: Vec<Vec<f64>>,
    hidden_pre: Vec<f64>,
    hidden_out: Vec<f64>,
    masks: Option<DropoutMasks>,
    pub logit: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    arch: Architecture,
    params: Vec<f32>,
    dropout: f64,
    conv_dropout: f64,
    convs: Vec<ConvGeom>,
    hidden: DenseGeom,
    head: DenseGeom,
}

impl ScorerModel {
    /// All weights and biases zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let (convs, hidden, head) = arch.layout();
        let params = vec![0.0; head.b_off + 1];
        Ok(Self {
            arch,
            params,
            dropout: DEFAULT_DROPOUT,
            conv_dropout: 0.0,
            convs,
            hidden,
            head,
        })
    }

    /// Weights uniform in `+-sqrt(6 / fan_in)` (`+-sqrt(3 / fan_in)` for the
    /// sigmoid head), biases zero. A convolution's fan-in counts only kernel
    /// taps that can overlap the input plane, so layers running on a 1x1
    /// plane are not scaled down by their padding.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut fill = |params: &mut [f32], fan_in: usize, gain: f64| {
            let limit = libm::sqrt(gain / fan_in as f64);
            for p in params {
                *p = rng.random_range(-limit..limit) as f32;
            }
        };
        for g in model.convs.clone() {
            let fan_in = g.in_c * g.kh.min(g.in_h) * g.kw.min(g.in_w);
            fill(&mut model.params[g.w_off..g.b_off], fan_in, 6.0);
        }
        let h = model.hidden;
        fill(&mut model.params[h.w_off..h.b_off], h.inputs, 6.0);
        let o = model.head;
        fill(&mut model.params[o.w_off..o.b_off], o.inputs, 3.0);
        Ok(model)
    }

    /// Dropout rate after the dense layer during training.
    pub fn with_dropout(mut self, rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        self.dropout = rate;
        self
    }

    /// Dropout rate after each convolution during training (0 by default).
    pub fn with_conv_dropout(mut self, rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        self.conv_dropout = rate;
        self
    }

    pub fn conv_dropout(&self) -> f64 {
        self.conv_dropout
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &MelSpectrogram) -> Result<()> {
        if x.shape() != self.arch.input {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input,
                got: x.shape(),
            });
        }
        Ok(())
    }

    /// Inference-mode score (no dropout). Pure in `(weights, input)`.
    pub fn forward(&self, x: &MelSpectrogram) -> Result<f64> {
        Ok(self.forward_traced(x, None)?.score)
    }

    /// Training-mode score with dropout masks drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &MelSpectrogram, rng: &mut R) -> Result<f64> {
        let masks = self.sample_dropout(rng);
        Ok(self.forward_traced(x, Some(masks))?.score)
    }

    pub fn sample_dropout<R: Rng + ?Sized>(&self, rng: &mut R) -> DropoutMasks {
        let mut draw = |n: usize, rate: f64| -> Vec<f64> {
            if rate == 0.0 {
                return vec![1.0; n];
            }
            let keep = 1.0 - rate;
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let conv = self
            .convs
            .iter()
            .map(|g| draw(g.out_len(), self.conv_dropout))
            .collect();
        let hidden = draw(self.hidden.outputs, self.dropout);
        DropoutMasks { conv, hidden }
    }

    /// Forward pass keeping every activation. `masks = None` is inference mode.
    pub fn forward_traced(&self, x: &MelSpectrogram, masks: Option<DropoutMasks>) -> Result<Trace> {
        self.check_input(x)?;
        let input: Vec<f64> = x.values().iter().map(|&v| v as f64).collect();
        let mut conv_pre = Vec::with_capacity(self.convs.len());
        let mut conv_out: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        for (l, g) in self.convs.iter().enumerate() {
            let src = if l == 0 { &input } else { &conv_out[l - 1] };
            let pre = self.conv_forward(g, src);
            let mut out: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            if let Some(m) = &masks {
                for (o, k) in out.iter_mut().zip(&m.conv[l]) {
                    *o *= k;
                }
            }
            conv_pre.push(pre);
            conv_out.push(out);
        }
        let flat = conv_out.last().unwrap_or(&input);
        let hidden_pre = self.dense_forward(&self.hidden, flat);
        let mut hidden_out: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
        if let Some(m) = &masks {
            for (o, k) in hidden_out.iter_mut().zip(&m.hidden) {
                *o *= k;
            }
        }
        let logit = self.dense_forward(&self.head, &hidden_out)[0];
        let score = sigmoid(logit).clamp(SCORE_EPS, 1.0 - SCORE_EPS);
        Ok(Trace {
            input,
            conv_pre,
            conv_out,
            hidden_pre,
            hidden_out,
            masks,
            logit,
            score,
        })
    }

    fn conv_forward(&self, g: &ConvGeom, src: &[f64]) -> Vec<f64> {
        debug_assert_eq!(src.len(), g.in_len());
        let w = &self.params[g.w_off..g.b_off];
        let b = &self.params[g.b_off..g.b_off + g.out_c];
        let mut out = vec![0.0; g.out_len()];
        let plane = g.out_h * g.out_w;
        for o in 0..g.out_c {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = b[o] as f64;
                    let (ky0, ky1, iy0) = g.row_taps(oy);
                    let (kx0, kx1, ix0) = g.col_taps(ox);
                    let width = kx1 - kx0;
                    for c in 0..g.in_c {
                        let wk = &w[(o * g.in_c + c) * g.kh * g.kw..];
                        let xin = &src[c * g.in_h * g.in_w..];
                        for (dy, ky) in (ky0..ky1).enumerate() {
                            let wrow = &wk[ky * g.kw + kx0..][..width];
                            let xrow = &xin[(iy0 + dy) * g.in_w + ix0..][..width];
                            for (&a, &v) in wrow.iter().zip(xrow) {
                                acc += a as f64 * v;
                            }
                        }
                    }
                    out[o * plane + oy * g.out_w + ox] = acc;
                }
            }
        }
        out
    }

    fn dense_forward(&self, g: &DenseGeom, src: &[f64]) -> Vec<f64> {
        let w = &self.params[g.w_off..g.b_off];
        let b = &self.params[g.b_off..g.b_off + g.outputs];
        (0..g.outputs)
            .map(|j| {
                let row = &w[j * g.inputs..(j + 1) * g.inputs];
                b[j] as f64
                    + row
                        .iter()
                        .zip(src)
                        .map(|(&a, &x)| a as f64 * x)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Huber loss of `trace` against `target` and its exact gradient with
    /// respect to every parameter, holding the trace's dropout masks fixed.
    pub fn backward(&self, trace: &Trace, target: f64, delta: f64) -> (f64, Vec<f64>) {
        let mut grads = vec![0.0f64; self.params.len()];
        let (loss, dscore) = huber_loss(trace.score, target, delta);
        let raw = sigmoid(trace.logit);
        let dlogit = if raw == trace.score {
            dscore * raw * (1.0 - raw)
        } else {
            0.0
        };

        // head
        let h = self.head;
        for (j, &a) in trace.hidden_out.iter().enumerate() {
            grads[h.w_off + j] = dlogit * a;
        }
        grads[h.b_off] = dlogit;

        // hidden dense
        let d = self.hidden;
        let flat = trace.conv_out.last().unwrap_or(&trace.input);
        let mut dflat = vec![0.0f64; d.inputs];
        for j in 0..d.outputs {
            let mut dpre = dlogit * self.params[h.w_off + j] as f64;
            if let Some(m) = &trace.masks {
                dpre *= m.hidden[j];
            }
            if trace.hidden_pre[j] <= 0.0 || dpre == 0.0 {
                continue;
            }
            grads[d.b_off + j] += dpre;
            let row = d.w_off + j * d.inputs;
            for i in 0..d.inputs {
                grads[row + i] += dpre * flat[i];
                dflat[i] += dpre * self.params[row + i] as f64;
            }
        }

        // convolutions, last to first
        let mut dout = dflat;
        for l in (0..self.convs.len()).rev() {
            let g = &self.convs[l];
            let src = if l == 0 {
                &trace.input
            } else {
                &trace.conv_out[l - 1]
            };
            let mut dpre = dout;
            for (i, v) in dpre.iter_mut().enumerate() {
                if let Some(m) = &trace.masks {
                    *v *= m.conv[l][i];
                }
                if trace.conv_pre[l][i] <= 0.0 {
                    *v = 0.0;
                }
            }
            let want_dsrc = l > 0;
            let mut dsrc = if want_dsrc {
                vec![0.0; g.in_len()]
            } else {
                Vec::new()
            };
            self.conv_backward(
                g,
                src,
                &dpre,
                &mut grads,
                want_dsrc.then_some(&mut dsrc[..]),
            );
            dout = dsrc;
        }
        (loss, grads)
    }

    fn conv_backward(
        &self,
        g: &ConvGeom,
        src: &[f64],
        dpre: &[f64],
        grads: &mut [f64],
        mut dsrc: Option<&mut [f64]>,
    ) {
        let plane = g.out_h * g.out_w;
        for o in 0..g.out_c {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let dp = dpre[o * plane + oy * g.out_w + ox];
                    if dp == 0.0 {
                        continue;
                    }
                    grads[g.b_off + o] += dp;
                    let (ky0, ky1, iy0) = g.row_taps(oy);
                    let (kx0, kx1, ix0) = g.col_taps(ox);
                    let width = kx1 - kx0;
                    for c in 0..g.in_c {
                        let wbase = g.w_off + (o * g.in_c + c) * g.kh * g.kw;
                        let xbase = c * g.in_h * g.in_w;
                        for (dy, ky) in (ky0..ky1).enumerate() {
                            let xi = xbase + (iy0 + dy) * g.in_w + ix0;
                            let wi = wbase + ky * g.kw + kx0;
                            for (gw, &v) in
                                grads[wi..wi + width].iter_mut().zip(&src[xi..xi + width])
                            {
                                *gw += dp * v;
                            }
                            if let Some(ds) = dsrc.as_deref_mut() {
                                let w = &self.params[wi..wi + width];
                                for (d, &a) in ds[xi..xi + width].iter_mut().zip(w) {
                                    *d += dp * a as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Loss and gradients for one example under fixed dropout masks.
    pub fn loss_and_gradients(
        &self,
        x: &MelSpectrogram,
        target: f64,
        masks: Option<DropoutMasks>,
        delta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let trace = self.forward_traced(x, masks)?;
        Ok(self.backward(&trace, target, delta))
    }

    /// Serializes to the little-endian `RRSC` model format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        put_u32(&mut out, MODEL_VERSION);
        put_u32(&mut out, (self.convs.len() + 3) as u32);
        put_layer(
            &mut out,
            KIND_INPUT,
            &[self.arch.input.0, self.arch.input.1],
            &[],
            &[],
        );
        for g in &self.convs {
            put_layer(
                &mut out,
                KIND_CONV,
                &[g.out_c, g.in_c, g.kh, g.kw, g.sh, g.sw],
                &self.params[g.w_off..g.b_off],
                &self.params[g.b_off..g.b_off + g.out_c],
            );
        }
        for d in [self.hidden, self.head] {
            put_layer(
                &mut out,
                KIND_DENSE,
                &[d.outputs, d.inputs],
                &self.params[d.w_off..d.b_off],
                &self.params[d.b_off..d.b_off + d.outputs],
            );
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || bytes[..4] != MODEL_MAGIC {
            return Err(Error::NotAModel);
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        if count < 3 {
            return Err(Error::MalformedModel("too few layers"));
        }
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            layers.push(r.layer()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedModel("trailing bytes"));
        }

        let (first, rest) = layers.split_first().expect("count >= 3");
        if first.kind != KIND_INPUT || first.dims.len() != 2 {
            return Err(Error::MalformedModel("first layer must describe the input"));
        }
        let (conv_layers, dense_layers) = rest.split_at(rest.len() - 2);
        let mut convs = Vec::with_capacity(conv_layers.len());
        let mut channels = 1;
        for l in conv_layers {
            if l.kind != KIND_CONV || l.dims.len() != 6 {
                return Err(Error::MalformedModel("expected a convolution layer"));
            }
            if l.dims[1] != channels {
                return Err(Error::MalformedModel("convolution channel mismatch"));
            }
            channels = l.dims[0];
            convs.push(ConvSpec {
                filters: l.dims[0],
                kernel: (l.dims[2], l.dims[3]),
                stride: (l.dims[4], l.dims[5]),
            });
        }
        let [hidden, head] = dense_layers else {
            unreachable!()
        };
        if hidden.kind != KIND_DENSE
            || head.kind != KIND_DENSE
            || hidden.dims.len() != 2
            || head.dims.len() != 2
        {
            return Err(Error::MalformedModel("expected two dense layers"));
        }
        if head.dims != [1, hidden.dims[0]] {
            return Err(Error::MalformedModel(
                "head must map the hidden layer to one unit",
            ));
        }
        let arch = Architecture {
            input: (first.dims[0], first.dims[1]),
            convs,
            dense: hidden.dims[0],
        };
        let mut model =
            Self::zeros(arch).map_err(|_| Error::MalformedModel("invalid architecture"))?;
        if model.hidden.inputs != hidden.dims[1] {
            return Err(Error::MalformedModel(
                "dense input does not match convolution output",
            ));
        }
        let mut params = Vec::with_capacity(model.params.len());
        for l in rest {
            params.extend_from_slice(&l.weights);
            params.extend_from_slice(&l.biases);
        }
        if params.len() != model.params.len() {
            return Err(Error::MalformedModel("parameter count mismatch"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::MalformedModel("non-finite parameter"));
        }
        model.params = params;
        Ok(model)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Huber loss of `pred - target` and its derivative with respect to `pred`.
pub fn huber_loss(pred: f64, target: f64, delta: f64) -> (f64, f64) {
    let e = pred - target;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// Bias-corrected Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

impl Adam {
    pub fn step(&self, params: &mut [f32], grads: &[f64], state: &mut AdamState, lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), state.m.len());
        state.step += 1;
        let t = state.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for i in 0..params.len() {
            let g = grads[i];
            state.m[i] = self.beta1 * state.m[i] + (1.0 - self.beta1) * g;
            state.v[i] = self.beta2 * state.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = state.m[i] / c1;
            let v_hat = state.v[i] / c2;
            params[i] = (params[i] as f64 - lr * m_hat / (libm::sqrt(v_hat) + self.eps)) as f32;
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_layer(out: &mut Vec<u8>, kind: u8, dims: &[usize], weights: &[f32], biases: &[f32]) {
    out.push(kind);
    put_u32(out, dims.len() as u32);
    for &d in dims {
        put_u32(out, d as u32);
    }
    for w in weights.iter().chain(biases) {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

struct RawLayer {
    kind: u8,
    dims: Vec<usize>,
    weights: Vec<f32>,
    biases: Vec<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::TruncatedModel)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::TruncatedModel)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn layer(&mut self) -> Result<RawLayer> {
        let kind = self.take(1)?[0];
        let ndims = self.u32()? as usize;
        if ndims > 8 {
            return Err(Error::MalformedModel("too many dimensions"));
        }
        let dims = (0..ndims)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let (n_weights, n_biases) = match (kind, dims.as_slice()) {
            (KIND_INPUT, [_, _]) => (0, 0),
            (KIND_CONV, [f, c, kh, kw, _, _]) => (f * c * kh * kw, *f),
            (KIND_DENSE, [o, i]) => (o * i, *o),
            (KIND_INPUT | KIND_CONV | KIND_DENSE, _) => {
                return Err(Error::MalformedModel("wrong dimension count"))
            }
            _ => return Err(Error::MalformedModel("unknown layer kind")),
        };
        Ok(RawLayer {
            kind,
            dims,
            weights: self.f32s(n_weights)?,
            biases: self.f32s(n_biases)?,
        })
    }
}
