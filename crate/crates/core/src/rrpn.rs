//! Test-time proposal re-weighting.
//!
//! After NMS, each proposal's objectness is blended with its prompt-based
//! foreground confidence, `fused = alpha * rpn + (1 - alpha) * kfpn`, and the
//! list is re-ranked on the blend before top-K retention.

use serde::{Deserialize, Serialize};

use crate::discovery::{score_proposal, DEFAULT_TEMPERATURE};
use crate::encoder::PromptBank;
use crate::error::{Error, Result};
use crate::kfpn::Pyramid;
use crate::par::Execution;
use crate::roi::{iou, Proposal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrpnConfig {
    pub alpha: f64,
    pub nms_iou: f64,
    pub keep_topk: usize,
    pub temperature: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RrpnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            nms_iou: 0.7,
            keep_topk: 1000,
            temperature: DEFAULT_TEMPERATURE,
            exec: Execution::default(),
        }
    }
}

impl RrpnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::InvalidArgument(format!("NMS IoU {} outside (0, 1)", self.nms_iou)));
        }
        if self.keep_topk == 0 {
            return Err(Error::InvalidArgument("keep_topk must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// Indices ordered by `key` descending, ties by index.
fn descending_order(keys: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order
}

/// Greedy NMS on `score_rpn`. Output is in keep order.
pub fn nms(proposals: &[Proposal], iou_thresh: f64) -> Vec<Proposal> {
    let scores: Vec<f32> = proposals.iter().map(|p| p.score_rpn).collect();
    let mut kept: Vec<&Proposal> = Vec::new();
    for i in descending_order(&scores) {
        let p = &proposals[i];
        if kept.iter().all(|k| iou(&k.bbox, &p.bbox) < iou_thresh) {
            kept.push(p);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Sets `score_kfpn` from the prompt bank and `score_fused` from the blend.
pub fn fuse_scores(proposals: &[Proposal], pyr: &Pyramid, bank: &PromptBank, cfg: &RrpnConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    cfg.exec.try_map(proposals, |p| {
        p.validate()?;
        let kfpn = score_proposal(pyr, &p.bbox, bank, cfg.temperature)?.confidence;
        let fused = cfg.alpha * p.score_rpn as f64 + (1.0 - cfg.alpha) * kfpn;
        let mut out = p.clone();
        out.score_kfpn = Some(kfpn as f32);
        out.score_fused = Some(fused as f32);
        Ok(out)
    })
}

/// Stable sort on `score_fused` descending, truncated to `k`.
pub fn rerank_topk(proposals: &[Proposal], k: usize) -> Result<Vec<Proposal>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let keys = proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.score_fused
                .ok_or_else(|| Error::InvalidArgument(format!("proposal {i} has no fused score")))
        })
        .collect::<Result<Vec<f32>>>()?;
    Ok(descending_order(&keys)
        .into_iter()
        .take(k)
        .map(|i| proposals[i].clone())
        .collect())
}

/// NMS, fusion, then top-K.
pub fn rrpn_pipeline(raw: &[Proposal], pyr: &Pyramid, bank: &PromptBank, cfg: &RrpnConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let survivors = nms(raw, cfg.nms_iou);
    let fused = fuse_scores(&survivors, pyr, bank, cfg)?;
    rerank_topk(&fused, cfg.keep_topk)
}
