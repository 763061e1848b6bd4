//! Frozen image/text encoder stand-ins.
//!
//! [`SyntheticEncoder`] plants class embeddings into feature grids so that
//! every downstream result has a known ground truth. [`NvtDirEncoder`] serves
//! features precomputed by a real backbone and stored as NVT files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::nvt::NvtTensor;
use crate::roi::BBox;
use crate::tensorops::{cosine_similarity, l2_normalize, FeatureMap};

const UNIT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptGroup {
    Foreground,
    Background,
    Base,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub label: String,
    pub embedding: Vec<f32>,
}

/// Unit-norm text embeddings grouped into foreground, background, base-class
/// and novel-class prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankFile", into = "BankFile")]
pub struct PromptBank {
    dim: usize,
    groups: BTreeMap<PromptGroup, Vec<PromptEntry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    dim: usize,
    groups: BTreeMap<PromptGroup, Vec<PromptEntry>>,
}

impl TryFrom<BankFile> for PromptBank {
    type Error = Error;
    fn try_from(f: BankFile) -> Result<Self> {
        PromptBank::new(f.dim, f.groups)
    }
}

impl From<PromptBank> for BankFile {
    fn from(b: PromptBank) -> Self {
        BankFile {
            dim: b.dim,
            groups: b.groups,
        }
    }
}

impl PromptBank {
    /// Validates and re-normalizes every embedding. Foreground and background
    /// groups are required; base and novel may be absent.
    pub fn new(dim: usize, mut groups: BTreeMap<PromptGroup, Vec<PromptEntry>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("prompt bank dim must be positive".into()));
        }
        for required in [PromptGroup::Foreground, PromptGroup::Background] {
            if groups.get(&required).is_none_or(Vec::is_empty) {
                return Err(Error::InvalidArgument(format!(
                    "prompt bank is missing the {required:?} group"
                )));
            }
        }
        for (group, entries) in groups.iter_mut() {
            for e in entries.iter_mut() {
                if e.embedding.len() != dim {
                    return Err(Error::Shape(format!(
                        "{group:?} prompt {:?} has dim {}, bank dim is {dim}",
                        e.label,
                        e.embedding.len()
                    )));
                }
                if e.embedding.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("{group:?} prompt {:?}", e.label)));
                }
                e.embedding = l2_normalize(&e.embedding)?;
            }
        }
        Ok(Self { dim, groups })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group(&self, g: PromptGroup) -> &[PromptEntry] {
        self.groups.get(&g).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(foreground, background, base, novel)` entry counts.
    pub fn group_sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.group(PromptGroup::Foreground).len(),
            self.group(PromptGroup::Background).len(),
            self.group(PromptGroup::Base).len(),
            self.group(PromptGroup::Novel).len(),
        )
    }

    pub fn n_base(&self) -> usize {
        self.group(PromptGroup::Base).len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_base() + self.group(PromptGroup::Novel).len()
    }

    /// Class embeddings indexed by class id: base classes, then novel ones.
    pub fn class_embeddings(&self) -> Vec<&[f32]> {
        self.group(PromptGroup::Base)
            .iter()
            .chain(self.group(PromptGroup::Novel))
            .map(|e| e.embedding.as_slice())
            .collect()
    }

    pub fn class_label(&self, class_id: usize) -> Option<&str> {
        self.group(PromptGroup::Base)
            .iter()
            .chain(self.group(PromptGroup::Novel))
            .nth(class_id)
            .map(|e| e.label.as_str())
    }

    pub fn is_novel_class(&self, class_id: usize) -> bool {
        class_id >= self.n_base()
    }

    /// Normalized mean of the background prompts.
    pub fn background_embedding(&self) -> Result<Vec<f32>> {
        let bg = self.group(PromptGroup::Background);
        let mut mean = vec![0f64; self.dim];
        for e in bg {
            for (m, &v) in mean.iter_mut().zip(&e.embedding) {
                *m += v as f64;
            }
        }
        let mean: Vec<f32> = mean.iter().map(|m| (m / bg.len() as f64) as f32).collect();
        l2_normalize(&mean)
    }

    pub fn is_unit_norm(&self) -> bool {
        self.groups.values().flatten().all(|e| {
            (crate::tensorops::l2_norm(&e.embedding) - 1.0).abs() <= UNIT_TOL
        })
    }
}

/// One planted object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    pub is_novel: bool,
}

/// A synthetic image: size, planted objects, and the noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub h: u32,
    pub w: u32,
    pub seed: u64,
    pub noise_sigma: f32,
    pub objects: Vec<SceneObject>,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Err(Error::InvalidArgument("scene size must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma {} must be finite and nonnegative",
                self.noise_sigma
            )));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let b = o.bbox;
            if !b.is_valid() || b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > self.w as f32 || b.y2 > self.h as f32 {
                return Err(Error::InvalidArgument(format!(
                    "object {i} box {b:?} is degenerate or outside {}x{}",
                    self.h, self.w
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SyntheticScene = serde_json::from_str(&text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    fn grid(&self, stride: u32) -> Result<(usize, usize)> {
        if stride == 0 || !self.h.is_multiple_of(stride) || !self.w.is_multiple_of(stride) {
            return Err(Error::InvalidArgument(format!(
                "scene {}x{} is not divisible by patch stride {stride}",
                self.h, self.w
            )));
        }
        Ok(((self.h / stride) as usize, (self.w / stride) as usize))
    }
}

/// Image-side encoder contract.
pub trait FrozenImageEncoder {
    /// Which internal layers [`encode_layers`](Self::encode_layers) returns, in order.
    fn layer_indices(&self) -> &[usize];
    fn feature_dim(&self) -> usize;
    /// Input pixels per feature cell.
    fn patch_stride(&self) -> u32;
    /// One map per exposed layer, all `feature_dim × h/stride × w/stride`.
    fn encode_layers(&self, scene: &SyntheticScene) -> Result<Vec<FeatureMap>>;
    /// Unit-norm embedding of the image region under `bbox`.
    fn encode_crop(&self, scene: &SyntheticScene, bbox: &BBox) -> Result<Vec<f32>>;

    /// The subset of [`encode_layers`](Self::encode_layers) at `picks`.
    fn encode_picked(&self, scene: &SyntheticScene, picks: &[usize]) -> Result<Vec<FeatureMap>> {
        let all = self.encode_layers(scene)?;
        picks
            .iter()
            .map(|p| {
                self.layer_indices()
                    .iter()
                    .position(|i| i == p)
                    .map(|k| all[k].clone())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "layer {p} not exposed; encoder has {:?}",
                            self.layer_indices()
                        ))
                    })
            })
            .collect()
    }
}

/// Mean of the cells of `map` whose centers lie in `bbox` (half-open),
/// normalized. A box too small to contain any center falls back to the
/// cell under its own center.
pub fn crop_embedding(map: &FeatureMap, stride: u32, scene: &SyntheticScene, bbox: &BBox) -> Result<Vec<f32>> {
    bbox.ensure_valid()?;
    let clipped = BBox::new(
        bbox.x1.max(0.0),
        bbox.y1.max(0.0),
        bbox.x2.min(scene.w as f32),
        bbox.y2.min(scene.h as f32),
    );
    if !clipped.is_valid() {
        return Err(Error::InvalidArgument(format!(
            "crop {bbox:?} lies outside the {}x{} image",
            scene.h, scene.w
        )));
    }
    let s = stride as f32;
    let (ch, h, w) = map.shape();
    let cells: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| center_in(&clipped, y, x, s))
        .collect();
    let cells = if cells.is_empty() {
        let cy = ((clipped.y1 + clipped.y2) / 2.0 / s).floor() as usize;
        let cx = ((clipped.x1 + clipped.x2) / 2.0 / s).floor() as usize;
        vec![(cy.min(h - 1), cx.min(w - 1))]
    } else {
        cells
    };
    let mut mean = vec![0f64; ch];
    for &(y, x) in &cells {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += map.get(c, y, x) as f64;
        }
    }
    let n = cells.len() as f64;
    let mean: Vec<f32> = mean.into_iter().map(|m| (m / n) as f32).collect();
    l2_normalize(&mean)
}

#[inline]
fn center_in(b: &BBox, y: usize, x: usize, stride: f32) -> bool {
    let cx = (x as f32 + 0.5) * stride;
    let cy = (y as f32 + 0.5) * stride;
    cx >= b.x1 && cx < b.x2 && cy >= b.y1 && cy < b.y2
}

/// Plants class embeddings into a feature grid.
///
/// A cell whose center lies in an object box carries that object's class
/// embedding (the last-listed object wins on overlap); every other cell
/// carries the background embedding. Each exposed layer then receives its
/// own seeded Gaussian noise of scale `scene.noise_sigma`.
#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    class_embeddings: Vec<Vec<f32>>,
    n_base: usize,
    background: Vec<f32>,
    layer_indices: Vec<usize>,
    patch_stride: u32,
}

impl SyntheticEncoder {
    pub fn from_bank(bank: &PromptBank, layer_indices: Vec<usize>, patch_stride: u32) -> Result<Self> {
        if layer_indices.is_empty() || patch_stride == 0 {
            return Err(Error::InvalidArgument(
                "encoder needs at least one layer and a positive stride".into(),
            ));
        }
        Ok(Self {
            class_embeddings: bank.class_embeddings().into_iter().map(<[f32]>::to_vec).collect(),
            n_base: bank.n_base(),
            background: bank.background_embedding()?,
            layer_indices,
            patch_stride,
        })
    }

    /// ViT-B/16 layout: layers 5, 7, 11 at stride 16.
    pub fn vit_b16(bank: &PromptBank) -> Result<Self> {
        Self::from_bank(bank, vec![5, 7, 11], 16)
    }

    pub fn background(&self) -> &[f32] {
        &self.background
    }

    fn check_objects(&self, scene: &SyntheticScene) -> Result<()> {
        scene.validate()?;
        for (i, o) in scene.objects.iter().enumerate() {
            if o.class_id >= self.class_embeddings.len() {
                return Err(Error::InvalidArgument(format!(
                    "object {i} class {} outside {} known classes",
                    o.class_id,
                    self.class_embeddings.len()
                )));
            }
            if o.is_novel != (o.class_id >= self.n_base) {
                return Err(Error::InvalidArgument(format!(
                    "object {i} is_novel={} disagrees with class {}",
                    o.is_novel, o.class_id
                )));
            }
        }
        Ok(())
    }

    /// Noise-free planted grid, shared by every layer.
    fn planted(&self, scene: &SyntheticScene) -> Result<FeatureMap> {
        let (h, w) = scene.grid(self.patch_stride)?;
        let s = self.patch_stride as f32;
        let owner: Vec<Option<usize>> = (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                scene
                    .objects
                    .iter()
                    .rposition(|o| center_in(&o.bbox, y, x, s))
                    .map(|k| scene.objects[k].class_id)
            })
            .collect();
        let dim = self.background.len();
        let mut data = Vec::with_capacity(dim * h * w);
        for c in 0..dim {
            data.extend(owner.iter().map(|o| match o {
                Some(cls) => self.class_embeddings[*cls][c],
                None => self.background[c],
            }));
        }
        FeatureMap::new(dim, h, w, data)
    }

    fn add_noise(&self, planted: &FeatureMap, scene: &SyntheticScene, layer: usize) -> Result<FeatureMap> {
        if scene.noise_sigma == 0.0 {
            return Ok(planted.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(layer as u64);
        let normal = Normal::new(0.0f64, scene.noise_sigma as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let (c, h, w) = planted.shape();
        let data = planted
            .data()
            .iter()
            .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
            .collect();
        FeatureMap::new(c, h, w, data)
    }
}

impl FrozenImageEncoder for SyntheticEncoder {
    fn layer_indices(&self) -> &[usize] {
        &self.layer_indices
    }

    fn feature_dim(&self) -> usize {
        self.background.len()
    }

    fn patch_stride(&self) -> u32 {
        self.patch_stride
    }

    fn encode_layers(&self, scene: &SyntheticScene) -> Result<Vec<FeatureMap>> {
        self.check_objects(scene)?;
        let planted = self.planted(scene)?;
        self.layer_indices
            .iter()
            .map(|&l| self.add_noise(&planted, scene, l))
            .collect()
    }

    /// Crops the last exposed layer.
    fn encode_crop(&self, scene: &SyntheticScene, bbox: &BBox) -> Result<Vec<f32>> {
        self.check_objects(scene)?;
        let top = *self.layer_indices.last().expect("non-empty by construction");
        let map = self.add_noise(&self.planted(scene)?, scene, top)?;
        crop_embedding(&map, self.patch_stride, scene, bbox)
    }
}

pub const FEATURES_MANIFEST: &str = "features.json";

#[derive(Serialize, Deserialize)]
struct FeatureManifest {
    patch_stride: u32,
    layers: Vec<FeatureManifestLayer>,
}

#[derive(Serialize, Deserialize)]
struct FeatureManifestLayer {
    index: usize,
    file: String,
}

/// Serves precomputed layer features from a directory of NVT files.
#[derive(Debug, Clone)]
pub struct NvtDirEncoder {
    layer_indices: Vec<usize>,
    maps: Vec<FeatureMap>,
    patch_stride: u32,
}

impl NvtDirEncoder {
    pub fn new(layer_indices: Vec<usize>, maps: Vec<FeatureMap>, patch_stride: u32) -> Result<Self> {
        if maps.is_empty() || maps.len() != layer_indices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} layer indices for {} maps",
                layer_indices.len(),
                maps.len()
            )));
        }
        if maps.iter().any(|m| m.shape() != maps[0].shape()) {
            return Err(Error::Shape("precomputed layers differ in shape".into()));
        }
        if patch_stride == 0 {
            return Err(Error::InvalidArgument("patch stride must be positive".into()));
        }
        Ok(Self {
            layer_indices,
            maps,
            patch_stride,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(FEATURES_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: FeatureManifest = serde_json::from_str(&text)?;
        let mut indices = Vec::new();
        let mut maps = Vec::new();
        for l in manifest.layers {
            indices.push(l.index);
            maps.push(NvtTensor::load(&dir.join(&l.file))?.into_feature_map()?);
        }
        Self::new(indices, maps, manifest.patch_stride)
    }

    pub fn maps(&self) -> &[FeatureMap] {
        &self.maps
    }

    fn check_scene(&self, scene: &SyntheticScene) -> Result<()> {
        let (h, w) = scene.grid(self.patch_stride)?;
        let (_, mh, mw) = self.maps[0].shape();
        if (h, w) != (mh, mw) {
            return Err(Error::Shape(format!(
                "scene grid {h}x{w} does not match stored features {mh}x{mw}"
            )));
        }
        Ok(())
    }
}

/// Writes `maps` as `layer_<index>.nvt` files plus a manifest.
pub fn save_layer_features(dir: &Path, indices: &[usize], maps: &[FeatureMap], patch_stride: u32) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::new();
    for (&index, map) in indices.iter().zip(maps) {
        let file = format!("layer_{index}.nvt");
        NvtTensor::from_feature_map(map).save(&dir.join(&file))?;
        layers.push(FeatureManifestLayer { index, file });
    }
    let manifest = FeatureManifest {
        patch_stride,
        layers,
    };
    let path = dir.join(FEATURES_MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(path, e))
}

impl FrozenImageEncoder for NvtDirEncoder {
    fn layer_indices(&self) -> &[usize] {
        &self.layer_indices
    }

    fn feature_dim(&self) -> usize {
        self.maps[0].channels()
    }

    fn patch_stride(&self) -> u32 {
        self.patch_stride
    }

    fn encode_layers(&self, scene: &SyntheticScene) -> Result<Vec<FeatureMap>> {
        self.check_scene(scene)?;
        Ok(self.maps.clone())
    }

    fn encode_crop(&self, scene: &SyntheticScene, bbox: &BBox) -> Result<Vec<f32>> {
        self.check_scene(scene)?;
        crop_embedding(self.maps.last().expect("non-empty"), self.patch_stride, scene, bbox)
    }
}

/// Parameters of a generated prompt bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBankSpec {
    pub dim: usize,
    pub n_base: usize,
    pub n_novel: usize,
    pub n_foreground: usize,
    pub n_background: usize,
    /// Bound on `|cos|` between distinct class embeddings (and the background anchor).
    pub max_abs_cos: f64,
    /// Classes mixed into each foreground prompt.
    pub foreground_mix: usize,
    /// Size of the random perturbation added to the background anchor.
    pub background_spread: f32,
    pub seed: u64,
}

impl Default for SyntheticBankSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            n_base: 12,
            n_novel: 4,
            n_foreground: 30,
            n_background: 30,
            max_abs_cos: 0.3,
            foreground_mix: 3,
            background_spread: 0.5,
            seed: 7,
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim)
            .map(|_| StandardNormal.sample(rng))
            .map(|x: f64| x as f32)
            .collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

fn mix_normalized(parts: &[&[f32]], weights: &[f32]) -> Result<Vec<f32>> {
    let dim = parts[0].len();
    let mut acc = vec![0f64; dim];
    for (p, &w) in parts.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(p.iter()) {
            *a += w as f64 * v as f64;
        }
    }
    l2_normalize(&acc.into_iter().map(|v| v as f32).collect::<Vec<_>>())
}

/// Generates a bank whose geometry mirrors a real text encoder's:
/// class embeddings are well separated random unit vectors, foreground
/// prompts are normalized blends of a few classes, and background prompts
/// cluster around a separate anchor direction.
pub fn synthetic_bank(spec: &SyntheticBankSpec) -> Result<PromptBank> {
    let n_classes = spec.n_base + spec.n_novel;
    if spec.n_foreground == 0 || spec.n_background == 0 {
        return Err(Error::InvalidArgument("foreground and background groups must be non-empty".into()));
    }
    if n_classes == 0 || spec.foreground_mix == 0 || spec.foreground_mix > n_classes {
        return Err(Error::InvalidArgument(format!(
            "foreground_mix {} must lie in 1..={n_classes}",
            spec.foreground_mix
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Rejection-sample class embeddings plus one background anchor.
    let mut anchors: Vec<Vec<f32>> = Vec::with_capacity(n_classes + 1);
    let max_tries = 100_000;
    for _ in 0..=n_classes {
        let mut tries = 0;
        let v = loop {
            let v = random_unit(&mut rng, spec.dim);
            let ok = anchors
                .iter()
                .all(|a| cosine_similarity(a, &v).map(|c| c.abs() <= spec.max_abs_cos).unwrap_or(false));
            if ok {
                break v;
            }
            tries += 1;
            if tries >= max_tries {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {} vectors in {} dims with |cos| <= {}",
                    n_classes + 1,
                    spec.dim,
                    spec.max_abs_cos
                )));
            }
        };
        anchors.push(v);
    }
    let bg_anchor = anchors.pop().expect("pushed n_classes + 1");
    let classes = anchors;

    let mut foreground = Vec::with_capacity(spec.n_foreground);
    for i in 0..spec.n_foreground {
        // Class i mod n is always included, so every class backs some prompt.
        let mut members = vec![i % n_classes];
        while members.len() < spec.foreground_mix {
            let c = rand::Rng::random_range(&mut rng, 0..n_classes);
            if !members.contains(&c) {
                members.push(c);
            }
        }
        let parts: Vec<&[f32]> = members.iter().map(|&c| classes[c].as_slice()).collect();
        foreground.push(PromptEntry {
            label: prompt_label(FOREGROUND_LABELS, i, "foreground prompt"),
            embedding: mix_normalized(&parts, &vec![1.0; parts.len()])?,
        });
    }

    let mut background = Vec::with_capacity(spec.n_background);
    for i in 0..spec.n_background {
        let jitter = random_unit(&mut rng, spec.dim);
        background.push(PromptEntry {
            label: prompt_label(BACKGROUND_LABELS, i, "background prompt"),
            embedding: mix_normalized(&[&bg_anchor, &jitter], &[1.0, spec.background_spread])?,
        });
    }

    let class_entry = |c: usize| PromptEntry {
        label: prompt_label(CLASS_NAMES, c, "class"),
        embedding: classes[c].clone(),
    };
    let mut groups = BTreeMap::new();
    groups.insert(PromptGroup::Foreground, foreground);
    groups.insert(PromptGroup::Background, background);
    groups.insert(PromptGroup::Base, (0..spec.n_base).map(class_entry).collect());
    groups.insert(PromptGroup::Novel, (spec.n_base..n_classes).map(class_entry).collect());
    PromptBank::new(spec.dim, groups)
}

fn prompt_label(table: &[&str], i: usize, fallback: &str) -> String {
    table
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("{fallback} {i}"))
}

/// Category-agnostic foreground descriptions.
pub const FOREGROUND_LABELS: &[&str] = &[
    "This is an object, specifically a plant",
    "This is an object, specifically an animal",
    "This is an object, specifically a vehicle",
    "This is an object, specifically a piece of furniture",
    "This is an object, specifically a tool",
    "This is an object, specifically a container",
    "This is an object, specifically an electronic device",
    "This is an object, specifically a food item",
    "This is an object, specifically a piece of clothing",
    "This is an object, specifically a musical instrument",
    "This is an object, specifically a toy",
    "This is an object, specifically a piece of sports equipment",
    "This is an object, specifically a kitchen utensil",
    "This is an object, specifically a household appliance",
    "This is an object, specifically a person",
    "This is an object, specifically a bird",
    "This is an object, specifically an insect",
    "This is an object, specifically a fruit",
    "This is an object, specifically a vegetable",
    "This is an object, specifically a sign",
    "This is an object, specifically a bag",
    "This is an object, specifically a book",
    "This is an object, specifically a bottle",
    "This is an object, specifically a decoration",
    "This is an object, specifically an accessory",
    "This is an object, specifically a machine",
    "This is an object, specifically a boat",
    "This is an object, specifically a piece of stationery",
    "This is an object, specifically a light fixture",
    "This is an object, specifically a statue",
];

/// Scene-background descriptions.
pub const BACKGROUND_LABELS: &[&str] = &[
    "This is a background area",
    "This is part of the ground",
    "This is part of the sky",
    "This is part of a wall",
    "This is part of the floor",
    "This is part of the ceiling",
    "This is part of a road surface",
    "This is part of a grass field",
    "This is part of the water surface",
    "This is part of a sandy beach",
    "This is part of a mountain range",
    "This is part of a distant forest",
    "This is part of the snow cover",
    "This is part of a pavement",
    "This is part of a tiled surface",
    "This is part of a wooden panel",
    "This is part of a carpet",
    "This is part of the clouds",
    "This is part of a building facade",
    "This is part of a fence",
    "This is part of the dirt",
    "This is part of a shadow",
    "This is part of a blurry region",
    "This is part of an empty space",
    "This is part of the horizon",
    "This is part of a field of rocks",
    "This is part of a plain texture",
    "This is part of the scenery",
    "This is part of a curtain",
    "This is part of the terrain",
];

const CLASS_NAMES: &[&str] = &[
    "person", "car", "chair", "bottle", "cup", "dog", "bicycle", "bench", "umbrella", "laptop",
    "book", "clock", "zebra", "kite", "toaster", "sousaphone", "armadillo", "gondola", "ferret",
    "gargoyle",
];
