//! Dense feature-map primitives: resize, pool, project, normalize, similarity.
//!
//! Values are stored as `f32`; reductions (dot products, interpolation
//! weights, affine maps) accumulate in `f64` and round once on store.

use crate::error::{Error, Result};
use crate::par::Execution;

/// A dense `channels × height × width` grid stored row-major, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "feature map dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match {channels}x{height}x{width} = {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature map element {i}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds a map from `f(channel, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `height × width` plane of one channel.
    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    /// The channel vector at one spatial cell.
    pub fn cell(&self, y: usize, x: usize) -> Result<Vec<f32>> {
        if y >= self.height || x >= self.width {
            return Err(Error::InvalidArgument(format!(
                "cell ({y}, {x}) outside {}x{} map",
                self.height, self.width
            )));
        }
        Ok((0..self.channels).map(|c| self.get(c, y, x)).collect())
    }

    /// Elementwise `a·self + b·other`.
    pub fn axpby(&self, a: f32, other: &FeatureMap, b: f32) -> Result<FeatureMap> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot blend {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| (a as f64 * x as f64 + b as f64 * y as f64) as f32)
            .collect();
        FeatureMap::new(self.channels, self.height, self.width, data)
    }

    pub fn scaled(&self, a: f32) -> Result<FeatureMap> {
        let data = self.data.iter().map(|&x| a * x).collect();
        FeatureMap::new(self.channels, self.height, self.width, data)
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> Option<f32> {
        (self.shape() == other.shape()).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max)
        })
    }
}

/// Source coordinate for output index `i` under align-corners sampling.
#[inline]
fn align_corners_src(i: usize, in_len: usize, out_len: usize) -> f64 {
    if out_len == 1 {
        (in_len - 1) as f64 / 2.0
    } else {
        (i * (in_len - 1)) as f64 / (out_len - 1) as f64
    }
}

/// Lower tap index and fractional weight of the upper tap.
#[inline]
fn taps(src: f64, in_len: usize) -> (usize, usize, f64) {
    let lo = (src.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear resize with align-corners sampling: the corner cells of input
/// and output coincide, and a length-1 output axis samples the input center.
pub fn bilinear_resize(map: &FeatureMap, out_h: usize, out_w: usize) -> Result<FeatureMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    if out_h == map.height && out_w == map.width {
        return Ok(map.clone());
    }
    let (ch, ih, iw) = map.shape();
    let ys: Vec<_> = (0..out_h)
        .map(|i| taps(align_corners_src(i, ih, out_h), ih))
        .collect();
    let xs: Vec<_> = (0..out_w)
        .map(|i| taps(align_corners_src(i, iw, out_w), iw))
        .collect();

    let mut data = Vec::with_capacity(ch * out_h * out_w);
    for c in 0..ch {
        let plane = map.plane(c);
        for &(y0, y1, fy) in &ys {
            let r0 = &plane[y0 * iw..(y0 + 1) * iw];
            let r1 = &plane[y1 * iw..(y1 + 1) * iw];
            for &(x0, x1, fx) in &xs {
                let top = (1.0 - fx) * r0[x0] as f64 + fx * r0[x1] as f64;
                let bot = (1.0 - fx) * r1[x0] as f64 + fx * r1[x1] as f64;
                data.push(((1.0 - fy) * top + fy * bot) as f32);
            }
        }
    }
    FeatureMap::new(ch, out_h, out_w, data)
}

/// 2×2 max pooling with stride 2.
pub fn max_pool2(map: &FeatureMap) -> Result<FeatureMap> {
    let (ch, h, w) = map.shape();
    if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max_pool2 needs even spatial dims >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        let p = map.plane(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * w + 2 * x;
                data.push(p[i].max(p[i + 1]).max(p[i + w]).max(p[i + w + 1]));
            }
        }
    }
    FeatureMap::new(ch, oh, ow, data)
}

/// A frozen per-pixel affine map `out = weight · in + bias`.
///
/// There are no mutating accessors; once built the parameters never change.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    out_dim: usize,
    in_dim: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ProjectionHead {
    /// `weight` is `out_dim × in_dim`, row-major.
    pub fn new(out_dim: usize, in_dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::Shape("projection dims must be positive".into()));
        }
        if weight.len() != out_dim * in_dim {
            return Err(Error::Shape(format!(
                "weight has {} values, expected {out_dim}x{in_dim}",
                weight.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias has {} values, expected {out_dim}",
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection head".into()));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weight,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, weight, vec![0.0; dim])
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Always true: heads are loaded once and never trained.
    pub fn frozen(&self) -> bool {
        true
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// FNV-1a over the dims and the raw bits of every parameter.
    pub fn checksum(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let dims = [self.out_dim as u32, self.in_dim as u32];
        let words = dims
            .into_iter()
            .chain(self.weight.iter().chain(&self.bias).map(|v| v.to_bits()));
        for w in words {
            for b in w.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        }
        h
    }
}

pub fn project(map: &FeatureMap, head: &ProjectionHead) -> Result<FeatureMap> {
    project_with(map, head, Execution::default())
}

/// [`project`] with an explicit execution mode; output channels are
/// computed independently, so every mode yields the same bits.
pub fn project_with(map: &FeatureMap, head: &ProjectionHead, exec: Execution) -> Result<FeatureMap> {
    if map.channels != head.in_dim {
        return Err(Error::Shape(format!(
            "map has {} channels, head expects {}",
            map.channels, head.in_dim
        )));
    }
    let hw = map.height * map.width;
    let mut out = vec![0f32; head.out_dim * hw];
    exec.for_each_chunk(&mut out, hw, |oc, dst| {
        let row = &head.weight[oc * head.in_dim..(oc + 1) * head.in_dim];
        let mut acc = vec![head.bias[oc] as f64; hw];
        for (ic, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let w = w as f64;
            for (a, &v) in acc.iter_mut().zip(map.plane(ic)) {
                *a += w * v as f64;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    FeatureMap::new(head.out_dim, map.height, map.width, out)
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn l2_norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `v / ‖v‖`; zero vectors are rejected.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let n = l2_norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector to normalize".into()));
    }
    if n == 0.0 {
        return Err(Error::ZeroNorm("l2_normalize"));
    }
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine_similarity"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `softmax(scores / temperature)`, computed with max subtraction.
pub fn tempered_softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("softmax over empty scores".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("softmax scores".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}
