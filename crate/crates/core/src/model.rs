//! TinyPulseNet: spatial average pooling followed by same-padded temporal
//! convolutions, mapping a `T×W×H×C` clip to a length-`T` pulse waveform.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::math;
use crate::rng::{substream, Stream};
use crate::signal::BvpSignal;
use crate::{Error, Result};

/// Clip dimensions, frames first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipDims {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ClipDims {
    pub fn numel(&self) -> usize {
        self.frames * self.width * self.height * self.channels
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height * self.channels
    }
}

/// A spatiotemporal clip stored row-major as `T×W×H×C`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    id: String,
    dims: ClipDims,
    fps: f64,
    data: Vec<f64>,
}

impl Clip {
    pub fn new(id: impl Into<String>, dims: ClipDims, fps: f64, data: Vec<f64>) -> Result<Self> {
        if dims.frames == 0 || dims.width == 0 || dims.height == 0 || dims.channels == 0 {
            return Err(Error::InvalidConfig(format!("clip dims must be >= 1: {dims:?}")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidConfig(format!("fps must be > 0, got {fps}")));
        }
        if data.len() != dims.numel() {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: dims.numel(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if data.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidConfig("clip values must lie in [0, 1]".into()));
        }
        Ok(Self {
            id: id.into(),
            dims,
            fps,
            data,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dims(&self) -> ClipDims {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims.frames
    }

    pub fn frame_len(&self) -> usize {
        self.dims.frame_len()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn value(&self, t: usize, w: usize, h: usize, c: usize) -> f64 {
        let d = self.dims;
        self.data[((t * d.width + w) * d.height + h) * d.channels + c]
    }

    /// Same id, dims and fps over new pixel data of equal length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            id: self.id.clone(),
            dims: self.dims,
            fps: self.fps,
            data,
        }
    }

    /// Per-frame spatial mean of each channel, laid out `[C, T]`.
    pub fn pooled(&self) -> Vec<f64> {
        let d = self.dims;
        let pixels = (d.width * d.height) as f64;
        let mut out = vec![0.0; d.channels * d.frames];
        for t in 0..d.frames {
            for px in self.frame(t).chunks_exact(d.channels) {
                for (c, v) in px.iter().enumerate() {
                    out[c * d.frames + t] += v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= pixels);
        out
    }
}

/// Layer layout of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    /// Input channels `C`.
    pub in_channels: usize,
    /// Hidden widths; the output layer (width 1) is implicit.
    pub hidden: Vec<usize>,
    /// Temporal kernel length of every layer.
    pub kernel: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            hidden: vec![8, 8],
            kernel: 11,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::InvalidSpec("in_channels must be >= 1".into()));
        }
        if self.kernel == 0 {
            return Err(Error::InvalidSpec("kernel must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidSpec("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(cin, cout)` of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.in_channels];
        widths.extend(&self.hidden);
        widths.push(1);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(cin, cout)| cout * cin * self.kernel + cout)
            .sum()
    }
}

/// Weights `[cout, cin, k]` and biases `[cout]` of one temporal conv.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layers: Vec<ConvLayer>,
}

impl ModelParams {
    /// Weights uniform in `±sqrt(1/fan_in)` with `fan_in = cin·k`; biases zero.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = substream(seed, Stream::Init);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(cin, cout)| {
                let bound = math::sqrt(1.0 / (cin * spec.kernel) as f64);
                let weight = (0..cout * cin * spec.kernel)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                ConvLayer {
                    cin,
                    cout,
                    weight,
                    bias: vec![0.0; cout],
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(spec: &ModelSpec, values: &[f64]) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.n_params() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: spec.n_params(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut rest = values;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(cin, cout)| {
                let (w, r) = rest.split_at(cout * cin * spec.kernel);
                let (b, r) = r.split_at(cout);
                rest = r;
                ConvLayer {
                    cin,
                    cout,
                    weight: w.to_vec(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        *self = Self::from_flat(&self.spec, values)?;
        Ok(())
    }

    /// Registers the parameters on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundParams> {
        let k = self.spec.kernel;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let wshape = [l.cout, l.cin, k];
            let (w, b) = if trainable {
                (tape.leaf(l.weight.clone(), &wshape)?, tape.leaf(l.bias.clone(), &[l.cout])?)
            } else {
                (
                    tape.constant(l.weight.clone(), &wshape)?,
                    tape.constant(l.bias.clone(), &[l.cout])?,
                )
            };
            layers.push((w, b));
        }
        Ok(BoundParams {
            channels: self.spec.in_channels,
            layers,
        })
    }
}

/// Parameter handles on one tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    channels: usize,
    layers: Vec<(Var, Var)>,
}

impl BoundParams {
    /// Wraps existing nodes given as weight, bias pairs in layer order.
    pub fn from_vars(tape: &Tape, spec: &ModelSpec, vars: &[Var]) -> Result<Self> {
        let dims = spec.layer_dims();
        if vars.len() != 2 * dims.len() {
            return Err(Error::LengthMismatch {
                left: vars.len(),
                right: 2 * dims.len(),
            });
        }
        let mut layers = Vec::with_capacity(dims.len());
        for (pair, &(cin, cout)) in vars.chunks_exact(2).zip(&dims) {
            let want_w = [cout, cin, spec.kernel];
            if tape.shape(pair[0]) != want_w || tape.shape(pair[1]) != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "from_vars",
                    left: tape.shape(pair[0]).to_vec(),
                    right: want_w.to_vec(),
                });
            }
            layers.push((pair[0], pair[1]));
        }
        Ok(Self {
            channels: spec.in_channels,
            layers,
        })
    }

    /// Gradient of every parameter in [`ModelParams::flatten`] order.
    pub fn flat_grad(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for &(w, b) in &self.layers {
            out.extend(grads.wrt_in(tape, w));
            out.extend(grads.wrt_in(tape, b));
        }
        out
    }

    /// Encoder forward on the tape; returns a `[T]` node.
    pub fn forward(&self, tape: &mut Tape, clip: &Clip) -> Result<Var> {
        let d = clip.dims();
        if d.channels != self.channels {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: vec![d.frames, d.width, d.height, d.channels],
                right: vec![self.channels],
            });
        }
        let features = center_rows(clip.pooled(), d.frames);
        let mut h = tape.constant(features, &[d.channels, d.frames])?;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.conv1d(h, w, b)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        tape.reshape(h, &[d.frames])
    }
}

// Removes each channel's temporal mean from the pooled traces.
fn center_rows(mut rows: Vec<f64>, len: usize) -> Vec<f64> {
    for row in rows.chunks_exact_mut(len) {
        let m = row.iter().sum::<f64>() / len as f64;
        row.iter_mut().for_each(|v| *v -= m);
    }
    rows
}

/// Inference with frozen parameters.
pub fn forward(params: &ModelParams, clip: &Clip) -> Result<BvpSignal> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false)?;
    let out = bound.forward(&mut tape, clip)?;
    BvpSignal::new(tape.value(out).to_vec(), clip.fps())
}
