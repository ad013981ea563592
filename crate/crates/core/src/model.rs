//! The three network streams and their fusion.
//!
//! - SpatialConvNet: 18-layer residual backbone over per-frame RGB+HSV,
//!   ending in a 1x1 conv + sigmoid depth head (`size / 8` maps).
//! - FreqTempNet: instance norm, per-frame 5x5 depthwise conv, max-pool 8,
//!   pointwise conv to `C_f`, layer norm, max-pool 2.
//! - TemporalConvNet: 1x1 conv over the stacked depth maps, ReLU, max-pool 2.
//! - Fusion: flatten both 16x16-class maps, concatenate, FC + ReLU to the
//!   feature, FC to two logits (live = 0, spoof = 1).
//!
//! A batch of `B` sequences of `N` frames runs the spatial stream on all
//! `B * N` frames at once; frame `t` of sequence `b` is row `b * N + t`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{hsv_image, luma, make_live_depth_label, make_spoof_depth_label};
use crate::data::{DepthParams, FrameSequence, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{fft2d, to_spectrum_image};
use crate::tensor::{init_normal, ParamStore, Tape, Tensor, Var, INIT_STD};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub image_size: usize,
    pub seq_len: usize,
    /// Scales every channel count, in `(0, 1]`.
    pub width_multiplier: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            image_size: 256,
            seq_len: 10,
            width_multiplier: 1.0,
        }
    }
}

fn scaled(channels: usize, wm: f64) -> usize {
    (libm::round(channels as f64 * wm) as usize).max(1)
}

impl NetworkConfig {
    pub fn new(image_size: usize, seq_len: usize, width_multiplier: f64) -> Result<Self> {
        let cfg = NetworkConfig {
            image_size,
            seq_len,
            width_multiplier,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return Err(Error::arg(format!(
                "image size must be a power of two >= 16, got {}",
                self.image_size
            )));
        }
        if self.seq_len == 0 {
            return Err(Error::arg("sequence length must be >= 1"));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::arg(format!(
                "width multiplier {} outside (0, 1]",
                self.width_multiplier
            )));
        }
        Ok(())
    }

    /// Spatial stage widths (64/128/256/512 at multiplier 1).
    pub fn stage_channels(&self) -> [usize; 4] {
        [64, 128, 256, 512].map(|c| scaled(c, self.width_multiplier))
    }

    pub fn freq_channels(&self) -> usize {
        scaled(64, self.width_multiplier)
    }

    pub fn temporal_channels(&self) -> usize {
        scaled(64, self.width_multiplier)
    }

    pub fn feature_dim(&self) -> usize {
        scaled(512, self.width_multiplier)
    }

    /// Side of the estimated depth maps.
    pub fn depth_size(&self) -> usize {
        self.image_size / 8
    }

    /// Side of both fused maps.
    pub fn fused_size(&self) -> usize {
        self.image_size / 16
    }

    fn fused_len(&self) -> usize {
        let s = self.fused_size();
        (self.freq_channels() + self.temporal_channels()) * s * s
    }
}

/// `(name, dims)` of every parameter in creation order.
pub fn parameter_layout(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let c = cfg.stage_channels();
    let n = cfg.seq_len;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    out.push(("spatial.conv0-0.weight".into(), vec![c[0], 6, 3, 3]));
    let mut in_ch = c[0];
    for (s, &ch) in c.iter().enumerate() {
        for k in 1..=4 {
            let cin = if k == 1 { in_ch } else { ch };
            out.push((
                format!("spatial.conv{}-{k}.weight", s + 1),
                vec![ch, cin, 3, 3],
            ));
            if k % 2 == 0 && needs_projection(s, k, in_ch, ch) {
                let cin = if k == 2 { in_ch } else { ch };
                out.push((
                    format!("spatial.conv{}-{k}.shortcut.weight", s + 1),
                    vec![ch, cin, 1, 1],
                ));
            }
        }
        in_ch = ch;
    }
    out.push(("spatial.head.weight".into(), vec![1, c[3], 1, 1]));
    out.push(("spatial.head.bias".into(), vec![1]));
    out.push(("freq.depthwise.weight".into(), vec![n, 1, 5, 5]));
    out.push((
        "freq.pointwise.weight".into(),
        vec![cfg.freq_channels(), n, 1, 1],
    ));
    out.push((
        "temporal.conv0.weight".into(),
        vec![cfg.temporal_channels(), n, 1, 1],
    ));
    out.push(("temporal.conv0.bias".into(), vec![cfg.temporal_channels()]));
    out.push((
        "fusion.fc.weight".into(),
        vec![cfg.fused_len(), cfg.feature_dim()],
    ));
    out.push(("fusion.fc.bias".into(), vec![cfg.feature_dim()]));
    out.push((
        "fusion.classifier.weight".into(),
        vec![cfg.feature_dim(), 2],
    ));
    out.push(("fusion.classifier.bias".into(), vec![2]));
    out
}

/// Stride of conv `k` (1-based) in spatial stage `s` (0-based).
fn conv_stride(s: usize, k: usize) -> usize {
    if s == 1 && k == 4 {
        2
    } else {
        1
    }
}

/// A residual block ending at conv `k` changes width or resolution.
fn needs_projection(s: usize, k: usize, in_ch: usize, ch: usize) -> bool {
    (k == 2 && in_ch != ch) || conv_stride(s, k) != 1
}

/// Per-parameter init seed derived from the model seed.
fn param_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub params: ParamStore<T>,
}

/// Parameters of a [`Network`] bound to tape leaves, in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Outputs of the spatial stream for `F` frames.
#[derive(Debug, Clone, Copy)]
pub struct SpatialOutput {
    /// `F x 1 x d x d`, values in `(0, 1)`.
    pub depth: Var,
    /// Last backbone feature map, `F x C4 x d x d`.
    pub features: Var,
    /// Conv0-0, max-pool, then the end of each of the four stages.
    pub stages: [Var; 6],
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `B*N x 1 x d x d`.
    pub depth: Var,
    /// `B x feature_dim`.
    pub feature: Var,
    /// `B x 2`.
    pub logits: Var,
}

impl<T: Scalar> Network<T> {
    /// Weights ~ N(0, 0.02), biases zero. Deterministic in `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (i, (name, dims)) in parameter_layout(&config).into_iter().enumerate() {
            let value = if name.ends_with(".bias") {
                Tensor::zeros(&dims)
            } else {
                init_normal(&dims, 0.0, INIT_STD, param_seed(seed, i))?
            };
            params.insert(name, value)?;
        }
        Ok(Network { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config,
            params: self.params.cast(),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect();
        Bound { vars }
    }

    fn var(&self, b: &Bound, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| b.vars[i])
            .ok_or_else(|| Error::arg(format!("network has no parameter {name:?}")))
    }

    /// `F x 6 x H x W` RGB+HSV frames to depth maps and backbone features.
    pub fn spatial_forward(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        frames: Var,
    ) -> Result<SpatialOutput> {
        let (_, ch, h, w) = tape.value(frames).dims4("spatial input")?;
        if ch != 6 {
            return Err(Error::shape(format!(
                "spatial stream expects 6 channels (RGB+HSV), got {:?}",
                tape.value(frames).dims()
            )));
        }
        let size = self.config.image_size;
        if h != size || w != size {
            return Err(Error::shape(format!(
                "spatial stream configured for {size}x{size}, got {:?}",
                tape.value(frames).dims()
            )));
        }
        let w0 = self.var(b, "spatial.conv0-0.weight")?;
        let x = tape.conv2d(frames, w0, 2, 1)?;
        let conv0 = tape.relu(x);
        let mut x = tape.maxpool2d(conv0, 2, 2)?;
        let mut stages = [conv0, x, x, x, x, x];
        for s in 0..4 {
            for k in [1, 3] {
                x = self.basic_block(tape, b, x, s, k)?;
            }
            stages[s + 2] = x;
        }
        let hw = self.var(b, "spatial.head.weight")?;
        let hb = self.var(b, "spatial.head.bias")?;
        let d = tape.pointwise_conv2d(x, hw)?;
        let d = tape.add_channel_bias(d, hb)?;
        let depth = tape.sigmoid(d);
        Ok(SpatialOutput {
            depth,
            features: x,
            stages,
        })
    }

    /// Convs `k` and `k + 1` of stage `s` with a residual connection.
    fn basic_block(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        x: Var,
        s: usize,
        k: usize,
    ) -> Result<Var> {
        let wa = self.var(b, &format!("spatial.conv{}-{k}.weight", s + 1))?;
        let wb = self.var(b, &format!("spatial.conv{}-{}.weight", s + 1, k + 1))?;
        let stride = conv_stride(s, k + 1);
        let y = tape.conv2d(x, wa, conv_stride(s, k), 1)?;
        let y = tape.relu(y);
        let y = tape.conv2d(y, wb, stride, 1)?;
        let shortcut = format!("spatial.conv{}-{}.shortcut.weight", s + 1, k + 1);
        let skip = match self.params.index_of(&shortcut) {
            Some(i) => tape.conv2d(x, b.vars[i], stride, 0)?,
            None => x,
        };
        let y = tape.add(y, skip)?;
        Ok(tape.relu(y))
    }

    /// `B x N x H x W` spectrum images to the `B x C_f x H/16 x W/16`
    /// MultiFreqMap.
    pub fn freqtemp_forward(&self, tape: &mut Tape<T>, b: &Bound, spectra: Var) -> Result<Var> {
        let (_, n, h, w) = tape.value(spectra).dims4("spectrum stack")?;
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::shape(format!(
                "spectrum extents must be divisible by 16, got {:?}",
                tape.value(spectra).dims()
            )));
        }
        if n != self.config.seq_len {
            return Err(Error::shape(format!(
                "frequency stream expects {} spectra per sequence, got {:?}",
                self.config.seq_len,
                tape.value(spectra).dims()
            )));
        }
        let eps = T::of(NORM_EPS);
        let x = tape.instance_norm(spectra, eps)?;
        let dw = self.var(b, "freq.depthwise.weight")?;
        let x = tape.depthwise_conv2d(x, dw, 1, 2)?;
        let x = tape.maxpool2d(x, 8, 8)?;
        let pw = self.var(b, "freq.pointwise.weight")?;
        let x = tape.pointwise_conv2d(x, pw)?;
        let x = tape.layer_norm(x, eps)?;
        tape.maxpool2d(x, 2, 2)
    }

    /// `B x N x d x d` depth maps to the `B x C_t x d/2 x d/2`
    /// MultiSpatialMap.
    pub fn temporal_forward(&self, tape: &mut Tape<T>, b: &Bound, depth: Var) -> Result<Var> {
        let (_, n, _, _) = tape.value(depth).dims4("depth stack")?;
        if n != self.config.seq_len {
            return Err(Error::shape(format!(
                "temporal stream expects {} depth maps per sequence, got {:?}",
                self.config.seq_len,
                tape.value(depth).dims()
            )));
        }
        let w = self.var(b, "temporal.conv0.weight")?;
        let bias = self.var(b, "temporal.conv0.bias")?;
        let x = tape.pointwise_conv2d(depth, w)?;
        let x = tape.add_channel_bias(x, bias)?;
        let x = tape.relu(x);
        tape.maxpool2d(x, 2, 2)
    }

    /// Returns `(feature, logits)`.
    pub fn fuse_and_classify(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        spatial_map: Var,
        freq_map: Var,
    ) -> Result<(Var, Var)> {
        let (bs, _, sh, sw) = tape.value(spatial_map).dims4("spatial map")?;
        let (bf, _, fh, fw) = tape.value(freq_map).dims4("frequency map")?;
        if (bs, sh, sw) != (bf, fh, fw) {
            return Err(Error::shape(format!(
                "fused maps disagree: {:?} vs {:?}",
                tape.value(spatial_map).dims(),
                tape.value(freq_map).dims()
            )));
        }
        let s_len = tape.value(spatial_map).len() / bs;
        let f_len = tape.value(freq_map).len() / bf;
        let s = tape.reshape(spatial_map, &[bs, s_len])?;
        let f = tape.reshape(freq_map, &[bf, f_len])?;
        let joint = tape.concat(&[s, f])?;
        let fc_w = self.var(b, "fusion.fc.weight")?;
        let fc_b = self.var(b, "fusion.fc.bias")?;
        let feature = tape.fully_connected(joint, fc_w, fc_b)?;
        let feature = tape.relu(feature);
        let cl_w = self.var(b, "fusion.classifier.weight")?;
        let cl_b = self.var(b, "fusion.classifier.bias")?;
        let logits = tape.fully_connected(feature, cl_w, cl_b)?;
        Ok((feature, logits))
    }

    /// Runs every stream on a prepared batch.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        batch: &Batch<T>,
    ) -> Result<ForwardOutput> {
        let n = self.config.seq_len;
        let bsz = batch.labels.len();
        let frames = tape.constant(batch.frames.clone());
        let spectra = tape.constant(batch.spectra.clone());
        let sp = self.spatial_forward(tape, b, frames)?;
        let d = self.config.depth_size();
        let stacked = tape.reshape(sp.depth, &[bsz, n, d, d])?;
        let spatial_map = self.temporal_forward(tape, b, stacked)?;
        let freq_map = self.freqtemp_forward(tape, b, spectra)?;
        let (feature, logits) = self.fuse_and_classify(tape, b, spatial_map, freq_map)?;
        Ok(ForwardOutput {
            depth: sp.depth,
            feature,
            logits,
        })
    }
}

/// `lambda * mean_frames(l2(depth, label)) + cross_entropy(logits, labels)`.
///
/// All depth maps share one extent, so the mean over frames of per-map mean
/// squares is the mean square over the whole stack.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    depth: Var,
    depth_labels: Var,
    logits: Var,
    labels: &[usize],
    lambda_depth: f64,
) -> Result<Var> {
    let (pd, ld) = (tape.value(depth).dims(), tape.value(depth_labels).dims());
    if pd != ld {
        return Err(Error::shape(format!(
            "depth maps {pd:?} vs depth labels {ld:?}"
        )));
    }
    let ce = tape.softmax_cross_entropy(logits, labels)?;
    let l2 = tape.l2_loss(depth, depth_labels)?;
    let l2 = tape.scale(l2, T::of(lambda_depth));
    tape.sum_scalars(&[l2, ce])
}

/// Network-ready tensors for one sequence, computed once and reused.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub id: String,
    pub label: Label,
    /// `N x 6 x H x W` RGB then HSV.
    pub frames: Vec<f32>,
    /// `N x H x W` spectrum images of the frame luma.
    pub spectra: Vec<f32>,
    /// `N x d x d` depth targets.
    pub depth: Vec<f32>,
}

/// FNV-1a, used to derive a stable depth-label seed from a sequence id.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of the live depth label of frame `t` of sequence `id`.
pub fn depth_label_seed(id: &str, t: usize) -> u64 {
    fnv1a(id.as_bytes()).wrapping_add(t as u64)
}

/// Takes the first `seq_len` frames of `seq` and derives the spatial input,
/// spectrum images and depth targets.
pub fn encode_sequence(seq: &FrameSequence, cfg: &NetworkConfig) -> Result<EncodedSequence> {
    let n = cfg.seq_len;
    if seq.len() < n {
        return Err(Error::data(format!(
            "sequence {} has {} frames, {n} needed",
            seq.id,
            seq.len()
        )));
    }
    let size = cfg.image_size;
    if seq.extent() != (size, size) {
        return Err(Error::data(format!(
            "sequence {} is {:?}, network expects {size}x{size}",
            seq.id,
            seq.extent()
        )));
    }
    let px = size * size;
    let d = cfg.depth_size();
    let mut frames = Vec::with_capacity(n * 6 * px);
    let mut spectra = Vec::with_capacity(n * px);
    let mut depth = Vec::with_capacity(n * d * d);
    for (t, img) in seq.frames.iter().take(n).enumerate() {
        frames.extend_from_slice(&img.data);
        frames.extend_from_slice(&hsv_image(img).data);
        let spec = to_spectrum_image(&fft2d(&luma(img))?);
        spectra.extend(spec.values.iter().map(|&v| v as f32));
        let label = match seq.label {
            Label::Live => {
                make_live_depth_label(&DepthParams::with_size(d), depth_label_seed(&seq.id, t))
            }
            Label::Spoof => make_spoof_depth_label(d),
        };
        depth.extend_from_slice(&label.values);
    }
    Ok(EncodedSequence {
        id: seq.id.clone(),
        label: seq.label,
        frames,
        spectra,
        depth,
    })
}

/// A stacked mini-batch of encoded sequences.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    /// `B*N x 6 x H x W`.
    pub frames: Tensor<T>,
    /// `B x N x H x W`.
    pub spectra: Tensor<T>,
    /// `B*N x 1 x d x d`.
    pub depth: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(items: &[&EncodedSequence], cfg: &NetworkConfig) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let (n, s, d) = (cfg.seq_len, cfg.image_size, cfg.depth_size());
        let b = items.len();
        let mut frames = Vec::with_capacity(b * n * 6 * s * s);
        let mut spectra = Vec::with_capacity(b * n * s * s);
        let mut depth = Vec::with_capacity(b * n * d * d);
        for e in items {
            if e.frames.len() != n * 6 * s * s || e.depth.len() != n * d * d {
                return Err(Error::shape(format!(
                    "sequence {} was encoded for a different network configuration",
                    e.id
                )));
            }
            let cvt = |v: &f32| T::of(*v as f64);
            frames.extend(e.frames.iter().map(cvt));
            spectra.extend(e.spectra.iter().map(cvt));
            depth.extend(e.depth.iter().map(cvt));
        }
        Ok(Batch {
            frames: Tensor::new(&[b * n, 6, s, s], frames)?,
            spectra: Tensor::new(&[b, n, s, s], spectra)?,
            depth: Tensor::new(&[b * n, 1, d, d], depth)?,
            labels: items.iter().map(|e| e.label.class_index()).collect(),
        })
    }
}

/// Softmax probability of the spoof class per row of `B x 2` logits.
pub fn spoof_probabilities<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<f64>> {
    let (rows, cols) = logits.dims2("logits")?;
    if cols != 2 {
        return Err(Error::shape(format!(
            "expected B x 2 logits, got {:?}",
            logits.dims()
        )));
    }
    Ok((0..rows)
        .map(|r| {
            let (a, b) = (
                logits.data()[2 * r].as_f64(),
                logits.data()[2 * r + 1].as_f64(),
            );
            1.0 / (1.0 + libm::exp(a - b))
        })
        .collect())
}
