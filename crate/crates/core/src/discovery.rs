//! Prompt-driven discovery of unlabeled (latent novel) objects.
//!
//! Proposals are pooled from the frozen pyramid and compared against
//! category-agnostic foreground/background prompts. Foreground proposals
//! that do not coincide with a labeled base object become candidates, and
//! the best of them are cached together with a frozen crop embedding for
//! later distillation.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{FrozenImageEncoder, PromptBank, PromptGroup, SyntheticScene};
use crate::error::{Error, Result};
use crate::harness::nvt::NvtTensor;
use crate::kfpn::Pyramid;
use crate::par::Execution;
use crate::roi::{iou, pooled_embedding, rescale_box, BBox, Proposal, ProposalSource, DEFAULT_POOL_SIZE};
use crate::tensorops::{cosine_similarity, l2_norm, tempered_softmax};

pub const DEFAULT_TEMPERATURE: f64 = 0.05;
pub const DEFAULT_CAPACITY: usize = 100;
pub const DEFAULT_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForegroundScore {
    /// Best cosine against foreground prompts.
    pub s_fg: f64,
    /// Best cosine against background prompts.
    pub s_bg: f64,
    /// Softmax mass on the foreground prompts, over all prompt similarities.
    pub confidence: f64,
}

impl ForegroundScore {
    pub fn is_foreground(&self) -> bool {
        self.s_fg > self.s_bg
    }
}

/// Builds a score from raw similarities against each prompt group.
pub fn foreground_confidence(fg_sims: &[f64], bg_sims: &[f64], temperature: f64) -> Result<ForegroundScore> {
    if fg_sims.is_empty() || bg_sims.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one foreground and one background similarity".into(),
        ));
    }
    let all: Vec<f64> = fg_sims.iter().chain(bg_sims).copied().collect();
    let p = tempered_softmax(&all, temperature)?;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ForegroundScore {
        s_fg: max(fg_sims),
        s_bg: max(bg_sims),
        confidence: p[..fg_sims.len()].iter().sum::<f64>().clamp(0.0, 1.0),
    })
}

/// Scores an already pooled feature vector against the bank.
pub fn score_embedding(embedding: &[f32], bank: &PromptBank, temperature: f64) -> Result<ForegroundScore> {
    let sims = |g| -> Result<Vec<f64>> {
        bank.group(g)
            .iter()
            .map(|e| cosine_similarity(embedding, &e.embedding))
            .collect()
    };
    foreground_confidence(
        &sims(PromptGroup::Foreground)?,
        &sims(PromptGroup::Background)?,
        temperature,
    )
}

pub fn score_proposal(pyr: &Pyramid, bbox: &BBox, bank: &PromptBank, temperature: f64) -> Result<ForegroundScore> {
    let emb = pooled_embedding(pyr, bbox, DEFAULT_POOL_SIZE)?;
    score_embedding(&emb, bank, temperature)
}

fn overlaps_base(b: &BBox, gt_base: &[BBox], iou_thresh: f64) -> bool {
    gt_base.iter().any(|g| iou(b, g) >= iou_thresh)
}

/// Drops proposals whose best IoU with any base ground-truth box reaches
/// `iou_thresh`. Survivors keep their order.
pub fn filter_base(proposals: &[Proposal], gt_base: &[BBox], iou_thresh: f64) -> Vec<Proposal> {
    proposals
        .iter()
        .filter(|p| !overlaps_base(&p.bbox, gt_base, iou_thresh))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct DiscoveryConfig {
    pub temperature: f64,
    /// IoU at or above which a proposal counts as a base object.
    pub base_iou: f64,
    /// Candidates kept per image.
    pub capacity: usize,
    pub exec: Execution,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            base_iou: DEFAULT_IOU,
            capacity: DEFAULT_CAPACITY,
            exec: Execution::default(),
        }
    }
}

/// Scores every proposal, keeps the foreground ones that are not base
/// objects, and returns the `capacity` most confident (ties by input order).
pub fn discover(
    pyr: &Pyramid,
    proposals: &[Proposal],
    gt_base: &[BBox],
    bank: &PromptBank,
    cfg: &DiscoveryConfig,
) -> Result<Vec<(Proposal, ForegroundScore)>> {
    if proposals.is_empty() {
        return Err(Error::InvalidArgument("discover needs at least one proposal".into()));
    }
    if !(cfg.base_iou > 0.0 && cfg.base_iou < 1.0) {
        return Err(Error::InvalidArgument(format!("base IoU {} outside (0, 1)", cfg.base_iou)));
    }
    let scores = cfg
        .exec
        .try_map(proposals, |p| score_proposal(pyr, &p.bbox, bank, cfg.temperature))?;

    let mut kept: Vec<(usize, ForegroundScore)> = scores
        .into_iter()
        .enumerate()
        .filter(|(i, s)| s.is_foreground() && !overlaps_base(&proposals[*i].bbox, gt_base, cfg.base_iou))
        .collect();
    kept.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence).then(a.0.cmp(&b.0)));
    kept.truncate(cfg.capacity);
    Ok(kept
        .into_iter()
        .map(|(i, s)| {
            let mut p = proposals[i].clone();
            p.score_kfpn = Some(s.confidence as f32);
            (p, s)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    /// In original-image coordinates.
    pub bbox: BBox,
    pub embedding: Vec<f32>,
    pub confidence: f32,
}

/// Write-once per-image store of discovered candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCache {
    pub image_id: String,
    pub capacity: usize,
    entries: Vec<CacheEntry>,
}

pub const CACHE_MANIFEST: &str = "cache.json";
pub const CACHE_EMBEDDINGS: &str = "embeddings.nvt";

#[derive(Serialize, Deserialize)]
struct CacheManifest {
    image_id: String,
    capacity: usize,
    entries: Vec<CacheManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct CacheManifestEntry {
    #[serde(rename = "box")]
    bbox: BBox,
    confidence: f32,
    embedding_file: String,
    /// Row in a stacked embedding file; absent for one-vector files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
}

impl CandidateCache {
    /// Sorts entries by confidence (stable) and checks the invariants.
    pub fn new(image_id: impl Into<String>, capacity: usize, mut entries: Vec<CacheEntry>) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("cache capacity must be positive".into()));
        }
        if entries.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "{} candidates exceed cache capacity {capacity}",
                entries.len()
            )));
        }
        for e in &entries {
            e.bbox.ensure_valid()?;
            if (l2_norm(&e.embedding) - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidArgument("cached embedding is not unit norm".into()));
            }
            if !e.confidence.is_finite() {
                return Err(Error::NonFinite("cached confidence".into()));
            }
        }
        if let Some(d) = entries.first().map(|e| e.embedding.len()) {
            if entries.iter().any(|e| e.embedding.len() != d) {
                return Err(Error::Shape("cached embeddings differ in dimension".into()));
            }
        }
        entries.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(Self {
            image_id: image_id.into(),
            capacity,
            entries,
        })
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the manifest and one stacked `N × D` embedding file.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(first) = self.entries.first() {
            let rows: Vec<Vec<f32>> = self.entries.iter().map(|e| e.embedding.clone()).collect();
            NvtTensor::from_rows(&rows, first.embedding.len())?.save(&dir.join(CACHE_EMBEDDINGS))?;
        }
        let manifest = CacheManifest {
            image_id: self.image_id.clone(),
            capacity: self.capacity,
            entries: self
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| CacheManifestEntry {
                    bbox: e.bbox,
                    confidence: e.confidence,
                    embedding_file: CACHE_EMBEDDINGS.to_string(),
                    row: Some(i),
                })
                .collect(),
        };
        let path = dir.join(CACHE_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(path, e))
    }

    /// Reads a cache written either with a stacked embedding file or with
    /// one NVT file per entry.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(CACHE_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CacheManifest = serde_json::from_str(&text)?;
        let mut files: HashMap<String, Vec<Vec<f32>>> = HashMap::new();
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for (i, m) in manifest.entries.into_iter().enumerate() {
            if !files.contains_key(&m.embedding_file) {
                let rows = NvtTensor::load(&dir.join(&m.embedding_file))?.to_rows()?;
                files.insert(m.embedding_file.clone(), rows);
            }
            let rows = &files[&m.embedding_file];
            let row = match (rows.len(), m.row) {
                (1, None) => 0,
                (_, Some(r)) => r,
                (_, None) => i,
            };
            let embedding = rows.get(row).cloned().ok_or_else(|| {
                Error::format("cache", format!("entry {i} points at missing row {row} of {}", m.embedding_file))
            })?;
            entries.push(CacheEntry {
                bbox: m.bbox,
                embedding,
                confidence: m.confidence,
            });
        }
        if entries.windows(2).any(|w| w[0].confidence < w[1].confidence) {
            return Err(Error::format("cache", "entries are not sorted by confidence"));
        }
        Self::new(manifest.image_id, manifest.capacity, entries)
    }
}

/// Re-encodes each candidate region with the frozen encoder and stores it.
///
/// Candidate boxes live in the detector's working resolution
/// `feature_size = (h, w)`; they are rescaled to the original
/// `image_size` before cropping.
pub fn build_cache<E: FrozenImageEncoder + ?Sized>(
    encoder: &E,
    scene: &SyntheticScene,
    image_id: &str,
    candidates: &[(Proposal, ForegroundScore)],
    feature_size: (u32, u32),
    image_size: (u32, u32),
    capacity: usize,
) -> Result<CandidateCache> {
    if candidates.len() > capacity {
        return Err(Error::InvalidArgument(format!(
            "{} candidates exceed cache capacity {capacity}",
            candidates.len()
        )));
    }
    let entries = candidates
        .iter()
        .map(|(p, s)| {
            let bbox = rescale_box(&p.bbox, feature_size, image_size)?;
            Ok(CacheEntry {
                bbox,
                embedding: encoder.encode_crop(scene, &bbox)?,
                confidence: s.confidence as f32,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CandidateCache::new(image_id, capacity, entries)
}

/// Swaps proposals for overlapping cached candidates.
///
/// Pairs with IoU at or above `iou_thresh` are matched greedily from the
/// highest IoU down, each proposal and each cached entry used at most once.
/// A matched proposal takes the cached box and is tagged as coming from the
/// cache; everything else passes through.
pub fn merge_cached(proposals: &[Proposal], cache: &CandidateCache, iou_thresh: f64) -> Vec<Proposal> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in proposals.iter().enumerate() {
        for (ci, c) in cache.entries.iter().enumerate() {
            let v = iou(&p.bbox, &c.bbox);
            if v >= iou_thresh {
                pairs.push((v, pi, ci));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out = proposals.to_vec();
    let mut used_p = vec![false; proposals.len()];
    let mut used_c = vec![false; cache.entries.len()];
    for (_, pi, ci) in pairs {
        if used_p[pi] || used_c[ci] {
            continue;
        }
        used_p[pi] = true;
        used_c[ci] = true;
        out[pi].bbox = cache.entries[ci].bbox;
        out[pi].source = ProposalSource::Cache;
    }
    out
}
