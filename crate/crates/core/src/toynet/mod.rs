//! Small differentiable image-to-image generators with explicit forward and
//! backward passes.
//!
//! Layers operate on channel-planar double buffers; parameters are stored in
//! single precision and all arithmetic runs in double precision. Gradients
//! come from a hand-written reverse sweep and are validated against central
//! finite differences in the tests.

mod model_file;
pub mod procedural;
pub mod train;

pub use model_file::{load_model, save_model, MODEL_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::SeededRng;

/// The available layer kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// 3x3 convolution, stride 1, reflect padding 1 (shape preserving).
    Conv3x3,
    /// 1x1 convolution: per-pixel channel mixing plus bias.
    PointwiseAffine,
    /// Elementwise `(tanh(z) + 1) / 2`, mapping anything into (0, 1).
    TanhScaled,
    /// 2x nearest-neighbor upsampling.
    UpsampleNearest2x,
    /// 2x bilinear upsampling (half-pixel-center sampling, edges clamped).
    UpsampleBilinear2x,
    /// 2x transposed convolution, 3x3 kernel shared across channels,
    /// stride 2, padding 1, output padding 1.
    UpsampleTconv2x,
}

impl LayerKind {
    pub(crate) fn id(self) -> u8 {
        match self {
            LayerKind::Conv3x3 => 1,
            LayerKind::PointwiseAffine => 2,
            LayerKind::TanhScaled => 3,
            LayerKind::UpsampleNearest2x => 4,
            LayerKind::UpsampleBilinear2x => 5,
            LayerKind::UpsampleTconv2x => 6,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Self> {
        Some(match id {
            1 => LayerKind::Conv3x3,
            2 => LayerKind::PointwiseAffine,
            3 => LayerKind::TanhScaled,
            4 => LayerKind::UpsampleNearest2x,
            5 => LayerKind::UpsampleBilinear2x,
            6 => LayerKind::UpsampleTconv2x,
            _ => return None,
        })
    }

    /// Number of parameters for the given channel counts.
    pub fn param_count(self, in_channels: usize, out_channels: usize) -> usize {
        match self {
            LayerKind::Conv3x3 => out_channels * in_channels * 9 + out_channels,
            LayerKind::PointwiseAffine => out_channels * in_channels + out_channels,
            LayerKind::TanhScaled
            | LayerKind::UpsampleNearest2x
            | LayerKind::UpsampleBilinear2x => 0,
            LayerKind::UpsampleTconv2x => 9,
        }
    }

    fn doubles_resolution(self) -> bool {
        matches!(
            self,
            LayerKind::UpsampleNearest2x
                | LayerKind::UpsampleBilinear2x
                | LayerKind::UpsampleTconv2x
        )
    }
}

/// One layer: kind, channel counts, and flat parameter vector.
///
/// Parameter layouts:
/// - conv3x3: `w[out][in][ky][kx]` then `bias[out]`
/// - pointwise: `w[out][in]` then `bias[out]`
/// - tconv2x: `w[ky][kx]` (9 weights, no bias)
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub params: Vec<f32>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_channels: usize, out_channels: usize, params: Vec<f32>) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        if !matches!(kind, LayerKind::Conv3x3 | LayerKind::PointwiseAffine)
            && in_channels != out_channels
        {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} requires in_channels == out_channels"
            )));
        }
        let expected = kind.param_count(in_channels, out_channels);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} params for {kind:?}"),
                got: format!("{} params", params.len()),
            });
        }
        Ok(Self {
            kind,
            in_channels,
            out_channels,
            params,
        })
    }

    /// Parameter-free layer constructor.
    pub fn activation(channels: usize) -> Self {
        Self::new(LayerKind::TanhScaled, channels, channels, vec![]).expect("valid")
    }

    /// Seeded conv3x3 with uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights
    /// and zero bias.
    pub fn conv3x3_seeded(in_channels: usize, out_channels: usize, rng: &mut SeededRng) -> Self {
        let fan_in = in_channels * 9;
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut params = Vec::with_capacity(out_channels * in_channels * 9 + out_channels);
        for _ in 0..out_channels * in_channels * 9 {
            params.push(rng.range(-bound, bound) as f32);
        }
        params.extend(std::iter::repeat(0.0f32).take(out_channels));
        Self::new(LayerKind::Conv3x3, in_channels, out_channels, params).expect("valid")
    }

    /// Identity pointwise affine: unit diagonal weights, zero bias.
    pub fn pointwise_identity(channels: usize) -> Self {
        let mut params = vec![0.0f32; channels * channels + channels];
        for c in 0..channels {
            params[c * channels + c] = 1.0;
        }
        Self::new(LayerKind::PointwiseAffine, channels, channels, params).expect("valid")
    }
}

/// Channel-planar double buffer: `data[c][y][x]` flattened.
#[derive(Clone, Debug)]
pub(crate) struct Planar {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Planar {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_image(img: &ImageTensor) -> Self {
        let (h, w, c) = img.shape();
        let mut data = vec![0.0; c * h * w];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[(ch * h + y) * w + x] = img.get(y, x, ch) as f64;
                }
            }
        }
        Self {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    pub fn from_interleaved(values: &[f64], height: usize, width: usize, channels: usize) -> Self {
        let mut data = vec![0.0; channels * height * width];
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    data[(ch * height + y) * width + x] =
                        values[(y * width + x) * channels + ch];
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for ch in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out[(y * self.width + x) * self.channels + ch] =
                        self.data[(ch * self.height + y) * self.width + x];
                }
            }
        }
        out
    }

    pub fn to_image(&self) -> Result<ImageTensor> {
        let planes: Vec<Vec<f64>> = (0..self.channels)
            .map(|c| {
                self.data[c * self.height * self.width..(c + 1) * self.height * self.width].to_vec()
            })
            .collect();
        ImageTensor::from_planes(self.height, self.width, &planes)
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }
}

/// Reflect-101 index mapping for padding (index -1 -> 1, n -> n-2).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

impl LayerSpec {
    fn output_shape(&self, h: usize, w: usize) -> (usize, usize) {
        if self.kind.doubles_resolution() {
            (2 * h, 2 * w)
        } else {
            (h, w)
        }
    }

    fn forward(&self, input: &Planar) -> Planar {
        match self.kind {
            LayerKind::Conv3x3 => self.forward_conv(input),
            LayerKind::PointwiseAffine => self.forward_pointwise(input),
            LayerKind::TanhScaled => {
                let mut out = input.clone();
                for v in &mut out.data {
                    *v = 0.5 * (v.tanh() + 1.0);
                }
                out
            }
            LayerKind::UpsampleNearest2x => upsample_nearest(input),
            LayerKind::UpsampleBilinear2x => upsample_bilinear(input),
            LayerKind::UpsampleTconv2x => {
                let kernel: Vec<f64> = self.params.iter().map(|&p| p as f64).collect();
                upsample_tconv(input, &kernel)
            }
        }
    }

    fn forward_conv(&self, input: &Planar) -> Planar {
        let (h, w) = (input.height, input.width);
        let mut out = Planar::zeros(self.out_channels, h, w);
        let wsz = self.in_channels * 9;
        let bias_off = self.out_channels * wsz;
        for oc in 0..self.out_channels {
            let bias = self.params[bias_off + oc] as f64;
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias;
                    for ic in 0..self.in_channels {
                        for ky in 0..3usize {
                            let iy = reflect(y as isize + ky as isize - 1, h);
                            for kx in 0..3usize {
                                let ix = reflect(x as isize + kx as isize - 1, w);
                                let wgt =
                                    self.params[oc * wsz + ic * 9 + ky * 3 + kx] as f64;
                                acc += wgt * input.at(ic, iy, ix);
                            }
                        }
                    }
                    *out.at_mut(oc, y, x) = acc;
                }
            }
        }
        out
    }

    fn forward_pointwise(&self, input: &Planar) -> Planar {
        let (h, w) = (input.height, input.width);
        let mut out = Planar::zeros(self.out_channels, h, w);
        let bias_off = self.out_channels * self.in_channels;
        for oc in 0..self.out_channels {
            let bias = self.params[bias_off + oc] as f64;
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias;
                    for ic in 0..self.in_channels {
                        acc += self.params[oc * self.in_channels + ic] as f64
                            * input.at(ic, y, x);
                    }
                    *out.at_mut(oc, y, x) = acc;
                }
            }
        }
        out
    }

    /// Gradient w.r.t. the layer input; `grad_out` matches the forward output.
    fn backward_input(&self, input: &Planar, grad_out: &Planar) -> Planar {
        match self.kind {
            LayerKind::Conv3x3 => {
                let (h, w) = (input.height, input.width);
                let mut grad_in = Planar::zeros(self.in_channels, h, w);
                let wsz = self.in_channels * 9;
                for oc in 0..self.out_channels {
                    for y in 0..h {
                        for x in 0..w {
                            let g = grad_out.at(oc, y, x);
                            if g == 0.0 {
                                continue;
                            }
                            for ic in 0..self.in_channels {
                                for ky in 0..3usize {
                                    let iy = reflect(y as isize + ky as isize - 1, h);
                                    for kx in 0..3usize {
                                        let ix = reflect(x as isize + kx as isize - 1, w);
                                        let wgt = self.params[oc * wsz + ic * 9 + ky * 3 + kx]
                                            as f64;
                                        *grad_in.at_mut(ic, iy, ix) += wgt * g;
                                    }
                                }
                            }
                        }
                    }
                }
                grad_in
            }
            LayerKind::PointwiseAffine => {
                let (h, w) = (input.height, input.width);
                let mut grad_in = Planar::zeros(self.in_channels, h, w);
                for oc in 0..self.out_channels {
                    for ic in 0..self.in_channels {
                        let wgt = self.params[oc * self.in_channels + ic] as f64;
                        for y in 0..h {
                            for x in 0..w {
                                *grad_in.at_mut(ic, y, x) += wgt * grad_out.at(oc, y, x);
                            }
                        }
                    }
                }
                grad_in
            }
            LayerKind::TanhScaled => {
                let mut grad_in = grad_out.clone();
                for (g, z) in grad_in.data.iter_mut().zip(&input.data) {
                    let t = z.tanh();
                    *g *= 0.5 * (1.0 - t * t);
                }
                grad_in
            }
            LayerKind::UpsampleNearest2x => {
                let mut grad_in = Planar::zeros(input.channels, input.height, input.width);
                for c in 0..input.channels {
                    for y in 0..grad_out.height {
                        for x in 0..grad_out.width {
                            *grad_in.at_mut(c, y / 2, x / 2) += grad_out.at(c, y, x);
                        }
                    }
                }
                grad_in
            }
            LayerKind::UpsampleBilinear2x => bilinear_adjoint(input, grad_out),
            LayerKind::UpsampleTconv2x => {
                let kernel: Vec<f64> = self.params.iter().map(|&p| p as f64).collect();
                tconv_input_adjoint(input, grad_out, &kernel)
            }
        }
    }

    /// Gradient w.r.t. the layer parameters, in the parameter layout.
    fn backward_params(&self, input: &Planar, grad_out: &Planar) -> Vec<f64> {
        match self.kind {
            LayerKind::Conv3x3 => {
                let (h, w) = (input.height, input.width);
                let wsz = self.in_channels * 9;
                let mut grads = vec![0.0; self.params.len()];
                let bias_off = self.out_channels * wsz;
                for oc in 0..self.out_channels {
                    for y in 0..h {
                        for x in 0..w {
                            let g = grad_out.at(oc, y, x);
                            if g == 0.0 {
                                continue;
                            }
                            grads[bias_off + oc] += g;
                            for ic in 0..self.in_channels {
                                for ky in 0..3usize {
                                    let iy = reflect(y as isize + ky as isize - 1, h);
                                    for kx in 0..3usize {
                                        let ix = reflect(x as isize + kx as isize - 1, w);
                                        grads[oc * wsz + ic * 9 + ky * 3 + kx] +=
                                            g * input.at(ic, iy, ix);
                                    }
                                }
                            }
                        }
                    }
                }
                grads
            }
            LayerKind::PointwiseAffine => {
                let (h, w) = (input.height, input.width);
                let mut grads = vec![0.0; self.params.len()];
                let bias_off = self.out_channels * self.in_channels;
                for oc in 0..self.out_channels {
                    for y in 0..h {
                        for x in 0..w {
                            let g = grad_out.at(oc, y, x);
                            grads[bias_off + oc] += g;
                            for ic in 0..self.in_channels {
                                grads[oc * self.in_channels + ic] += g * input.at(ic, y, x);
                            }
                        }
                    }
                }
                grads
            }
            LayerKind::TanhScaled
            | LayerKind::UpsampleNearest2x
            | LayerKind::UpsampleBilinear2x => vec![],
            LayerKind::UpsampleTconv2x => {
                let mut grads = vec![0.0; 9];
                for c in 0..input.channels {
                    for iy in 0..input.height {
                        for ix in 0..input.width {
                            let v = input.at(c, iy, ix);
                            for ky in 0..3usize {
                                let oy = 2 * iy as isize + ky as isize - 1;
                                if oy < 0 || oy >= grad_out.height as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ox = 2 * ix as isize + kx as isize - 1;
                                    if ox < 0 || ox >= grad_out.width as isize {
                                        continue;
                                    }
                                    grads[ky * 3 + kx] +=
                                        v * grad_out.at(c, oy as usize, ox as usize);
                                }
                            }
                        }
                    }
                }
                grads
            }
        }
    }
}

pub(crate) fn upsample_nearest(input: &Planar) -> Planar {
    let mut out = Planar::zeros(input.channels, input.height * 2, input.width * 2);
    for c in 0..input.channels {
        for y in 0..out.height {
            for x in 0..out.width {
                *out.at_mut(c, y, x) = input.at(c, y / 2, x / 2);
            }
        }
    }
    out
}

/// Source coordinate and lerp weight for 2x bilinear upsampling with
/// half-pixel centers: output i samples input at (i + 0.5)/2 - 0.5.
#[inline]
fn bilinear_taps(i: usize, n: usize) -> (usize, usize, f64) {
    let s = (i as f64 + 0.5) / 2.0 - 0.5;
    let f = s.floor();
    let t = s - f;
    let lo = (f.max(0.0) as usize).min(n - 1);
    let hi = ((f as isize + 1).max(0) as usize).min(n - 1);
    (lo, hi, t)
}

pub(crate) fn upsample_bilinear(input: &Planar) -> Planar {
    let mut out = Planar::zeros(input.channels, input.height * 2, input.width * 2);
    for c in 0..input.channels {
        for y in 0..out.height {
            let (y0, y1, ty) = bilinear_taps(y, input.height);
            for x in 0..out.width {
                let (x0, x1, tx) = bilinear_taps(x, input.width);
                let top = (1.0 - tx) * input.at(c, y0, x0) + tx * input.at(c, y0, x1);
                let bot = (1.0 - tx) * input.at(c, y1, x0) + tx * input.at(c, y1, x1);
                *out.at_mut(c, y, x) = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    out
}

fn bilinear_adjoint(input: &Planar, grad_out: &Planar) -> Planar {
    let mut grad_in = Planar::zeros(input.channels, input.height, input.width);
    for c in 0..input.channels {
        for y in 0..grad_out.height {
            let (y0, y1, ty) = bilinear_taps(y, input.height);
            for x in 0..grad_out.width {
                let (x0, x1, tx) = bilinear_taps(x, input.width);
                let g = grad_out.at(c, y, x);
                *grad_in.at_mut(c, y0, x0) += g * (1.0 - ty) * (1.0 - tx);
                *grad_in.at_mut(c, y0, x1) += g * (1.0 - ty) * tx;
                *grad_in.at_mut(c, y1, x0) += g * ty * (1.0 - tx);
                *grad_in.at_mut(c, y1, x1) += g * ty * tx;
            }
        }
    }
    grad_in
}

/// Transposed 3x3 convolution, stride 2, padding 1, output padding 1,
/// kernel shared across channels: out[o] += k[t] * in[i] where o = 2i + t - 1.
pub(crate) fn upsample_tconv(input: &Planar, kernel: &[f64]) -> Planar {
    let mut out = Planar::zeros(input.channels, input.height * 2, input.width * 2);
    for c in 0..input.channels {
        for iy in 0..input.height {
            for ix in 0..input.width {
                let v = input.at(c, iy, ix);
                for ky in 0..3usize {
                    let oy = 2 * iy as isize + ky as isize - 1;
                    if oy < 0 || oy >= out.height as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ox = 2 * ix as isize + kx as isize - 1;
                        if ox < 0 || ox >= out.width as isize {
                            continue;
                        }
                        *out.at_mut(c, oy as usize, ox as usize) += kernel[ky * 3 + kx] * v;
                    }
                }
            }
        }
    }
    out
}

fn tconv_input_adjoint(input: &Planar, grad_out: &Planar, kernel: &[f64]) -> Planar {
    let mut grad_in = Planar::zeros(input.channels, input.height, input.width);
    for c in 0..input.channels {
        for iy in 0..input.height {
            for ix in 0..input.width {
                let mut acc = 0.0;
                for ky in 0..3usize {
                    let oy = 2 * iy as isize + ky as isize - 1;
                    if oy < 0 || oy >= grad_out.height as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ox = 2 * ix as isize + kx as isize - 1;
                        if ox < 0 || ox >= grad_out.width as isize {
                            continue;
                        }
                        acc += kernel[ky * 3 + kx] * grad_out.at(c, oy as usize, ox as usize);
                    }
                }
                *grad_in.at_mut(c, iy, ix) = acc;
            }
        }
    }
    grad_in
}

/// A layered generator. The final layer must be the scaled tanh so forward
/// outputs always land in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ToyGenerator {
    layers: Vec<LayerSpec>,
    pub family_tag: String,
    pub seed: u64,
}

impl ToyGenerator {
    pub fn new(layers: Vec<LayerSpec>, family_tag: impl Into<String>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("generator needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} channels", pair[0].out_channels),
                    got: format!("{} channels", pair[1].in_channels),
                });
            }
        }
        if layers.last().unwrap().kind != LayerKind::TanhScaled {
            return Err(Error::InvalidArgument(
                "final layer must be the scaled tanh activation".into(),
            ));
        }
        Ok(Self {
            layers,
            family_tag: family_tag.into(),
            seed,
        })
    }

    /// Default translator: conv3x3(3 -> hidden) -> tanh -> conv3x3(hidden -> 3) -> tanh.
    pub fn default_translator(hidden: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let layers = vec![
            LayerSpec::conv3x3_seeded(3, hidden, &mut rng),
            LayerSpec::activation(hidden),
            LayerSpec::conv3x3_seeded(hidden, 3, &mut rng),
            LayerSpec::activation(3),
        ];
        Self::new(layers, "toy-translator", seed).expect("valid architecture")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }

    /// Total parameter count across layers.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        if x.channels() != self.input_channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", self.input_channels()),
                got: format!("{} channels", x.channels()),
            });
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, h: usize, w: usize) -> (usize, usize, usize) {
        let (mut oh, mut ow) = (h, w);
        for layer in &self.layers {
            let (nh, nw) = layer.output_shape(oh, ow);
            oh = nh;
            ow = nw;
        }
        (oh, ow, self.output_channels())
    }

    /// Deterministic layer-by-layer evaluation; output lies in [0, 1].
    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.check_input(x)?;
        let mut act = Planar::from_image(x);
        for layer in &self.layers {
            act = layer.forward(&act);
        }
        act.to_image()
    }

    /// Forward pass that keeps each layer's input for the reverse sweep.
    fn forward_cached(&self, x: &ImageTensor) -> Result<Vec<Planar>> {
        self.check_input(x)?;
        let mut cache = Vec::with_capacity(self.layers.len() + 1);
        cache.push(Planar::from_image(x));
        for layer in &self.layers {
            let next = layer.forward(cache.last().unwrap());
            cache.push(next);
        }
        Ok(cache)
    }

    fn check_grad_out(&self, x: &ImageTensor, grad_out: &[f64]) -> Result<(usize, usize, usize)> {
        let (oh, ow, oc) = self.output_shape(x.height(), x.width());
        if grad_out.len() != oh * ow * oc {
            return Err(Error::ShapeMismatch {
                expected: format!("{} gradient values", oh * ow * oc),
                got: format!("{} gradient values", grad_out.len()),
            });
        }
        Ok((oh, ow, oc))
    }

    /// Gradient of `<grad_out, forward(x)>` w.r.t. the input samples.
    ///
    /// `grad_out` and the returned vector use the image layout: row-major,
    /// channel-interleaved.
    pub fn backward_input(&self, x: &ImageTensor, grad_out: &[f64]) -> Result<Vec<f64>> {
        let (oh, ow, oc) = self.check_grad_out(x, grad_out)?;
        let cache = self.forward_cached(x)?;
        let mut grad = Planar::from_interleaved(grad_out, oh, ow, oc);
        for (layer, input) in self.layers.iter().rev().zip(cache.iter().rev().skip(1)) {
            grad = layer.backward_input(input, &grad);
        }
        Ok(grad.to_interleaved())
    }

    /// Gradient of `<grad_out, forward(x)>` w.r.t. every parameter, one flat
    /// vector per layer in each layer's parameter layout.
    pub fn backward_params(&self, x: &ImageTensor, grad_out: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (oh, ow, oc) = self.check_grad_out(x, grad_out)?;
        let cache = self.forward_cached(x)?;
        let mut grad = Planar::from_interleaved(grad_out, oh, ow, oc);
        let mut param_grads = vec![Vec::new(); self.layers.len()];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache[idx];
            param_grads[idx] = layer.backward_params(input, &grad);
            if idx > 0 {
                grad = layer.backward_input(input, &grad);
            }
        }
        Ok(param_grads)
    }
}
