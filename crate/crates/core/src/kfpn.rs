//! Parameter-free feature pyramid over frozen encoder layers.
//!
//! Three same-resolution encoder layers are blended top-down, passed through
//! a frozen projection head, then resampled into five levels F2..F6:
//!
//! ```text
//! P4 ───────────────► T4 ─► head ─► C4 ─┬────────► F4 (×1)
//! P3 ─► W·P3+(1-W)·T4 ► T3 ─► head ─► C3 ─► bilinear ×2 ─► F3
//! P2 ─► W·P2+(1-W)·T3 ► T2 ─► head ─► C2 ─► bilinear ×4 ─► F2
//!                                        └─► maxpool ─► F5 ─► maxpool ─► F6
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::nvt::NvtTensor;
use crate::par::Execution;
use crate::tensorops::{bilinear_resize, max_pool2, project_with, FeatureMap, ProjectionHead};

pub const LEVEL_NAMES: [&str; 5] = ["F2", "F3", "F4", "F5", "F6"];

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub name: String,
    pub map: FeatureMap,
    /// Input pixels per feature cell.
    pub stride: u32,
}

/// Levels ordered finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<PyramidLevel>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLevel {
    name: String,
    stride: u32,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    levels: Vec<ManifestLevel>,
}

pub const PYRAMID_MANIFEST: &str = "pyramid.json";

impl Pyramid {
    pub fn new(levels: Vec<PyramidLevel>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        };
        let channels = first.map.channels();
        for pair in levels.windows(2) {
            if pair[1].stride <= pair[0].stride {
                return Err(Error::InvalidArgument(format!(
                    "strides must increase: {} ({}) then {} ({})",
                    pair[0].name, pair[0].stride, pair[1].name, pair[1].stride
                )));
            }
        }
        if let Some(l) = levels.iter().find(|l| l.map.channels() != channels) {
            return Err(Error::Shape(format!(
                "level {} has {} channels, expected {channels}",
                l.name,
                l.map.channels()
            )));
        }
        if levels.iter().any(|l| l.stride == 0) {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }

    pub fn level(&self, name: &str) -> Option<&PyramidLevel> {
        self.levels.iter().find(|l| l.name == name)
    }

    pub fn channels(&self) -> usize {
        self.levels[0].map.channels()
    }

    /// Writes one NVT file per level plus a JSON manifest.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Manifest { levels: Vec::new() };
        for level in &self.levels {
            let file = format!("{}.nvt", level.name);
            NvtTensor::from_feature_map(&level.map).save(&dir.join(&file))?;
            manifest.levels.push(ManifestLevel {
                name: level.name.clone(),
                stride: level.stride,
                file,
            });
        }
        let path = dir.join(PYRAMID_MANIFEST);
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(PYRAMID_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let levels = manifest
            .levels
            .into_iter()
            .map(|l| {
                let map = NvtTensor::load(&dir.join(&l.file))?.into_feature_map()?;
                Ok(PyramidLevel {
                    name: l.name,
                    map,
                    stride: l.stride,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Pyramid::new(levels)
    }
}

#[derive(Debug, Clone)]
pub struct KfpnConfig {
    /// Encoder layers feeding P2, P3, P4.
    pub layer_picks: [usize; 3],
    /// Weight on the lateral (lower-layer) path; `1 - W` goes to the top-down path.
    pub fusion_weight: f32,
    pub head: ProjectionHead,
    /// Strides of F2..F6 in input pixels.
    pub target_strides: [u32; 5],
}

impl KfpnConfig {
    /// ViT-B/16 defaults: layers 5, 7, 11; `W = 0.3`; strides 4..64.
    pub fn new(head: ProjectionHead) -> Self {
        Self {
            layer_picks: [5, 7, 11],
            fusion_weight: 0.3,
            head,
            target_strides: [4, 8, 16, 32, 64],
        }
    }

    /// Strides for an encoder whose base feature map has `patch_stride` pixels per cell.
    pub fn strides_for_patch(patch_stride: u32) -> Result<[u32; 5]> {
        if patch_stride == 0 || !patch_stride.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "patch stride {patch_stride} is not a positive multiple of 4"
            )));
        }
        Ok([
            patch_stride / 4,
            patch_stride / 2,
            patch_stride,
            patch_stride * 2,
            patch_stride * 4,
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(Error::InvalidArgument(format!(
                "fusion weight {} outside [0, 1]",
                self.fusion_weight
            )));
        }
        let [a, b, c] = self.layer_picks;
        if !(a < b && b < c) {
            return Err(Error::InvalidArgument(format!(
                "layer picks {:?} must be strictly increasing",
                self.layer_picks
            )));
        }
        let s = self.target_strides;
        if s[0] == 0 || s.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(Error::InvalidArgument(format!(
                "target strides {s:?} must double from level to level"
            )));
        }
        Ok(())
    }
}

/// Top-down blend: `t4 = p4`, `t3 = W·p3 + (1−W)·t4`, `t2 = W·p2 + (1−W)·t3`.
pub fn top_down_fuse(
    p2: &FeatureMap,
    p3: &FeatureMap,
    p4: &FeatureMap,
    w: f32,
) -> Result<(FeatureMap, FeatureMap, FeatureMap)> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("fusion weight {w} outside [0, 1]")));
    }
    if p2.shape() != p3.shape() || p3.shape() != p4.shape() {
        return Err(Error::Shape(format!(
            "fusion inputs differ: {:?}, {:?}, {:?}",
            p2.shape(),
            p3.shape(),
            p4.shape()
        )));
    }
    let t4 = p4.clone();
    let t3 = p3.axpby(w, &t4, 1.0 - w)?;
    let t2 = p2.axpby(w, &t3, 1.0 - w)?;
    Ok((t2, t3, t4))
}

pub fn build_pyramid(layers: &[FeatureMap], cfg: &KfpnConfig) -> Result<Pyramid> {
    build_pyramid_with(layers, cfg, Execution::default())
}

/// `layers` are the three encoder outputs at `cfg.layer_picks`, lowest layer first.
pub fn build_pyramid_with(
    layers: &[FeatureMap],
    cfg: &KfpnConfig,
    exec: Execution,
) -> Result<Pyramid> {
    cfg.validate()?;
    let [p2, p3, p4] = layers else {
        return Err(Error::InvalidArgument(format!(
            "expected 3 base layers, got {}",
            layers.len()
        )));
    };
    let (_, h, w) = p4.shape();
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::Shape(format!(
            "base resolution {h}x{w} must be divisible by 4"
        )));
    }
    let (t2, t3, t4) = top_down_fuse(p2, p3, p4, cfg.fusion_weight)?;
    let c2 = project_with(&t2, &cfg.head, exec)?;
    let c3 = project_with(&t3, &cfg.head, exec)?;
    let c4 = project_with(&t4, &cfg.head, exec)?;

    let f2 = bilinear_resize(&c2, 4 * h, 4 * w)?;
    let f3 = bilinear_resize(&c3, 2 * h, 2 * w)?;
    let f5 = max_pool2(&c4)?;
    let f6 = max_pool2(&f5)?;
    let maps = [f2, f3, c4, f5, f6];

    let levels = maps
        .into_iter()
        .zip(LEVEL_NAMES)
        .zip(cfg.target_strides)
        .map(|((map, name), stride)| PyramidLevel {
            name: name.to_string(),
            map,
            stride,
        })
        .collect();
    Pyramid::new(levels)
}

/// Bounds-checked channel vector at `(y, x)` of a named level.
pub fn pyramid_cell_feature(pyr: &Pyramid, level: &str, y: usize, x: usize) -> Result<Vec<f32>> {
    let l = pyr
        .level(level)
        .ok_or_else(|| Error::InvalidArgument(format!("no pyramid level named {level}")))?;
    l.map.cell(y, x)
}
