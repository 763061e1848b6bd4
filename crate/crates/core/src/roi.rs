//! Boxes, proposals, IoU and RoI-Align pooling of pyramid features.
//!
//! Feature coordinates put cell `i` at its center: an image coordinate `u`
//! maps to `u / stride - 0.5`. Reads outside the map replicate the border.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfpn::Pyramid;
use crate::tensorops::{l2_normalize, FeatureMap};

/// Axis-aligned box in image pixels; serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 4]", into = "[f32; 4]")]
pub struct BBox {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl From<[f32; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [f32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [f32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub const fn new(x1: f32, y1: f32, x2: f32, y2: f32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x2 as f64 - self.x1 as f64) * (self.y2 as f64 - self.y1 as f64)
    }

    /// Finite with strictly positive extent on both axes.
    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x2 > self.x1
            && self.y2 > self.y1
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("degenerate box {self:?}")))
        }
    }

    pub fn translated(&self, dx: f32, dy: f32) -> Self {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }
}

/// Intersection over union; `0` when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) as f64 - a.x1.max(b.x1) as f64).max(0.0);
    let ih = (a.y2.min(b.y2) as f64 - a.y1.max(b.y1) as f64).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalSource {
    Rpn,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score_rpn: f32,
    #[serde(default)]
    pub score_kfpn: Option<f32>,
    #[serde(default)]
    pub score_fused: Option<f32>,
    pub source: ProposalSource,
}

impl Proposal {
    pub fn rpn(bbox: BBox, score_rpn: f32) -> Self {
        Self {
            bbox,
            score_rpn,
            score_kfpn: None,
            score_fused: None,
            source: ProposalSource::Rpn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.ensure_valid()?;
        let unit = |name: &str, v: f32| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("score_rpn", self.score_rpn)?;
        if let Some(v) = self.score_kfpn {
            unit("score_kfpn", v)?;
        }
        if let Some(v) = self.score_fused {
            unit("score_fused", v)?;
        }
        Ok(())
    }
}

pub fn load_proposals(path: &Path) -> Result<Vec<Proposal>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let props: Vec<Proposal> = serde_json::from_str(&text)?;
    for p in &props {
        p.validate()?;
    }
    Ok(props)
}

pub fn save_proposals(path: &Path, proposals: &[Proposal]) -> Result<()> {
    let json = serde_json::to_string_pretty(proposals)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Box corners in continuous feature coordinates `(x1, y1, x2, y2)`.
fn to_feature_coords(b: &BBox, stride: u32) -> (f64, f64, f64, f64) {
    let s = stride as f64;
    (
        b.x1 as f64 / s - 0.5,
        b.y1 as f64 / s - 0.5,
        b.x2 as f64 / s - 0.5,
        b.y2 as f64 / s - 0.5,
    )
}

fn check_roi(level: &FeatureMap, stride: u32, b: &BBox, out_h: usize, out_w: usize) -> Result<()> {
    b.ensure_valid()?;
    if stride == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} and output {out_h}x{out_w} must be positive"
        )));
    }
    let (x1, y1, x2, y2) = to_feature_coords(b, stride);
    let (h, w) = (level.height() as f64, level.width() as f64);
    if x2 <= -0.5 || y2 <= -0.5 || x1 >= w - 0.5 || y1 >= h - 0.5 {
        return Err(Error::InvalidArgument(format!(
            "box {b:?} does not overlap the {}x{} map at stride {stride}",
            level.height(),
            level.width()
        )));
    }
    Ok(())
}

/// Mean of the clamped 1-D linear interpolant over `[a, b]`, expressed as
/// weights on the `n` nodes. Returns `(first_index, weights)`.
fn interval_weights(a: f64, b: f64, n: usize) -> (usize, Vec<f64>) {
    debug_assert!(b > a);
    if n == 1 {
        return (0, vec![1.0]);
    }
    let last = (n - 1) as f64;
    let lo_idx = a.clamp(0.0, last).floor() as usize;
    let hi_idx = (b.clamp(0.0, last).ceil() as usize).min(n - 1);
    let mut w = vec![0.0; hi_idx - lo_idx + 1];

    // Left and right of the node range the interpolant is flat.
    if a < 0.0 {
        w[0] += b.min(0.0) - a;
    }
    if b > last {
        w[hi_idx - lo_idx] += b - a.max(last);
    }
    let (lo, hi) = (a.max(0.0), b.min(last));
    if hi > lo {
        let mut k = lo.floor() as usize;
        while (k as f64) < hi && k < n - 1 {
            let s = lo.max(k as f64) - k as f64;
            let e = hi.min((k + 1) as f64) - k as f64;
            if e > s {
                let upper = (e * e - s * s) / 2.0;
                w[k - lo_idx] += (e - s) - upper;
                w[k + 1 - lo_idx] += upper;
            }
            k += 1;
        }
    }
    let len = b - a;
    w.iter_mut().for_each(|v| *v /= len);
    (lo_idx, w)
}

/// RoI-Align: splits `bbox` into `out_h × out_w` bins and returns, for every
/// bin, the exact mean of the bilinear interpolant of `level` over the bin.
///
/// The bin mean is integrated in closed form rather than estimated from a
/// fixed number of sample points; see [`roi_align_sampled`] for the sampled
/// estimator.
pub fn roi_align(
    level: &FeatureMap,
    stride: u32,
    bbox: &BBox,
    out_h: usize,
    out_w: usize,
) -> Result<FeatureMap> {
    check_roi(level, stride, bbox, out_h, out_w)?;
    let (x1, y1, x2, y2) = to_feature_coords(bbox, stride);
    let (bin_h, bin_w) = ((y2 - y1) / out_h as f64, (x2 - x1) / out_w as f64);
    let (ch, h, w) = level.shape();
    let ys: Vec<_> = (0..out_h)
        .map(|i| interval_weights(y1 + i as f64 * bin_h, y1 + (i + 1) as f64 * bin_h, h))
        .collect();
    let xs: Vec<_> = (0..out_w)
        .map(|j| interval_weights(x1 + j as f64 * bin_w, x1 + (j + 1) as f64 * bin_w, w))
        .collect();

    let mut out = Vec::with_capacity(ch * out_h * out_w);
    for c in 0..ch {
        let plane = level.plane(c);
        for (y0, wy) in &ys {
            for (x0, wx) in &xs {
                let mut acc = 0.0;
                for (dy, &a) in wy.iter().enumerate() {
                    let row = &plane[(y0 + dy) * w + x0..];
                    let inner: f64 = wx.iter().zip(row).map(|(&b, &v)| b * v as f64).sum();
                    acc += a * inner;
                }
                out.push(acc as f32);
            }
        }
    }
    FeatureMap::new(ch, out_h, out_w, out)
}

/// Clamped bilinear read at continuous feature coordinates.
pub fn bilinear_at(level: &FeatureMap, c: usize, y: f64, x: f64) -> f64 {
    let (_, h, w) = level.shape();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let g = |yy, xx| level.get(c, yy, xx) as f64;
    (1.0 - fy) * ((1.0 - fx) * g(y0, x0) + fx * g(y0, x1))
        + fy * ((1.0 - fx) * g(y1, x0) + fx * g(y1, x1))
}

/// Classic RoI-Align estimator: the average of `ratio × ratio` bilinear
/// samples at the centers of a regular sub-grid in each bin.
pub fn roi_align_sampled(
    level: &FeatureMap,
    stride: u32,
    bbox: &BBox,
    out_h: usize,
    out_w: usize,
    ratio: usize,
) -> Result<FeatureMap> {
    check_roi(level, stride, bbox, out_h, out_w)?;
    if ratio == 0 {
        return Err(Error::InvalidArgument("sampling ratio must be positive".into()));
    }
    let (x1, y1, x2, y2) = to_feature_coords(bbox, stride);
    let (bin_h, bin_w) = ((y2 - y1) / out_h as f64, (x2 - x1) / out_w as f64);
    let r = ratio as f64;
    FeatureMap::from_fn(level.channels(), out_h, out_w, |c, i, j| {
        let mut acc = 0.0;
        for sy in 0..ratio {
            let y = y1 + i as f64 * bin_h + (sy as f64 + 0.5) * bin_h / r;
            for sx in 0..ratio {
                let x = x1 + j as f64 * bin_w + (sx as f64 + 0.5) * bin_w / r;
                acc += bilinear_at(level, c, y, x);
            }
        }
        (acc / (r * r)) as f32
    })
}

pub const CANONICAL_BOX_SIZE: f64 = 224.0;
pub const CANONICAL_LEVEL: i32 = 4;

/// FPN routing: `clamp(⌊4 + log2(√area / 224)⌋, 2, 6)`.
pub fn select_level(bbox: &BBox) -> u32 {
    let side = bbox.area().max(f64::MIN_POSITIVE).sqrt();
    let k = (CANONICAL_LEVEL as f64 + (side / CANONICAL_BOX_SIZE).log2()).floor();
    k.clamp(2.0, 6.0) as u32
}

pub const DEFAULT_POOL_SIZE: usize = 7;

/// Routes `bbox` to one pyramid level, RoI-aligns it at `out × out`,
/// averages the bins and L2-normalizes the result.
pub fn pooled_embedding(pyr: &Pyramid, bbox: &BBox, out: usize) -> Result<Vec<f32>> {
    let name = format!("F{}", select_level(bbox));
    let level = pyr
        .level(&name)
        .ok_or_else(|| Error::InvalidArgument(format!("pyramid has no level {name}")))?;
    let pooled = roi_align(&level.map, level.stride, bbox, out, out)?;
    let bins = (out * out) as f64;
    let mean: Vec<f32> = (0..pooled.channels())
        .map(|c| (pooled.plane(c).iter().map(|&v| v as f64).sum::<f64>() / bins) as f32)
        .collect();
    l2_normalize(&mean)
}

/// Rescales `bbox` from an image of `from = (h, w)` to one of `to = (h, w)`.
pub fn rescale_box(bbox: &BBox, from: (u32, u32), to: (u32, u32)) -> Result<BBox> {
    if from.0 == 0 || from.1 == 0 || to.0 == 0 || to.1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "image sizes must be positive: {from:?} -> {to:?}"
        )));
    }
    if from == to {
        return Ok(*bbox);
    }
    let sy = to.0 as f64 / from.0 as f64;
    let sx = to.1 as f64 / from.1 as f64;
    Ok(BBox::new(
        (bbox.x1 as f64 * sx) as f32,
        (bbox.y1 as f64 * sy) as f32,
        (bbox.x2 as f64 * sx) as f32,
        (bbox.y2 as f64 * sy) as f32,
    ))
}
