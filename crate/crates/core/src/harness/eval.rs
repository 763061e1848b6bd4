//! Recall and top-1 classification of retained proposals.

use serde::{Deserialize, Serialize};

use crate::encoder::{PromptBank, SyntheticScene};
use crate::error::{Error, Result};
use crate::kfpn::Pyramid;
use crate::par::Execution;
use crate::roi::{iou, pooled_embedding, Proposal, DEFAULT_POOL_SIZE};
use crate::tensorops::{cosine_similarity, tempered_softmax};

/// Max-cosine below which a prediction is flagged as unreliable.
pub const LOW_CONFIDENCE_COS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMatch {
    pub object: usize,
    pub class_id: usize,
    pub is_novel: bool,
    /// Some top-k proposal reaches the IoU threshold.
    pub recalled: bool,
    /// Best IoU over the top-k proposals (0 if none).
    pub best_iou: f64,
    /// Proposal assigned by one-to-one greedy matching, if any.
    pub matched_proposal: Option<usize>,
    pub matched_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub k: usize,
    pub iou_match: f64,
    pub n_base: usize,
    pub n_novel: usize,
    /// `None` when the scene has no object of that group.
    pub recall_base: Option<f64>,
    pub recall_novel: Option<f64>,
    pub recall_all: Option<f64>,
    pub matches: Vec<ObjectMatch>,
}

impl RecallReport {
    pub fn recalled(&self, novel: Option<bool>) -> usize {
        self.matches
            .iter()
            .filter(|m| m.recalled && novel.is_none_or(|n| m.is_novel == n))
            .count()
    }
}

fn ratio(hit: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hit as f64 / n as f64)
}

/// Evaluates the first `k` proposals of `kept` against the scene objects.
pub fn eval_recall(kept: &[Proposal], scene: &SyntheticScene, iou_match: f64, k: usize) -> Result<RecallReport> {
    if !(iou_match > 0.0 && iou_match < 1.0) {
        return Err(Error::InvalidArgument(format!("IoU threshold {iou_match} outside (0, 1)")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let top = &kept[..k.min(kept.len())];
    let ious: Vec<Vec<f64>> = scene
        .objects
        .iter()
        .map(|o| top.iter().map(|p| iou(&o.bbox, &p.bbox)).collect())
        .collect();

    let mut pairs: Vec<(f64, usize, usize)> = ious
        .iter()
        .enumerate()
        .flat_map(|(oi, row)| row.iter().enumerate().map(move |(pi, &v)| (v, oi, pi)))
        .filter(|&(v, _, _)| v >= iou_match)
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned: Vec<Option<(usize, f64)>> = vec![None; scene.objects.len()];
    let mut used = vec![false; top.len()];
    for (v, oi, pi) in pairs {
        if assigned[oi].is_none() && !used[pi] {
            assigned[oi] = Some((pi, v));
            used[pi] = true;
        }
    }

    let matches: Vec<ObjectMatch> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let best_iou = ious[i].iter().copied().fold(0.0, f64::max);
            ObjectMatch {
                object: i,
                class_id: o.class_id,
                is_novel: o.is_novel,
                recalled: best_iou >= iou_match,
                best_iou,
                matched_proposal: assigned[i].map(|a| a.0),
                matched_iou: assigned[i].map(|a| a.1),
            }
        })
        .collect();
    let n_novel = matches.iter().filter(|m| m.is_novel).count();
    let n_base = matches.len() - n_novel;
    let mut report = RecallReport {
        k,
        iou_match,
        n_base,
        n_novel,
        recall_base: None,
        recall_novel: None,
        recall_all: None,
        matches,
    };
    report.recall_base = ratio(report.recalled(Some(false)), n_base);
    report.recall_novel = ratio(report.recalled(Some(true)), n_novel);
    report.recall_all = ratio(report.recalled(None), n_base + n_novel);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub proposal: Proposal,
    pub class_id: usize,
    pub label: String,
    pub max_cos: f64,
    /// Softmax probability of the predicted class over all classes.
    pub probability: f64,
    pub low_confidence: bool,
}

/// Top-1 class over base followed by novel class embeddings; ties go to the
/// lower class index.
pub fn classify_embedding(embedding: &[f32], bank: &PromptBank, temperature: f64) -> Result<(usize, f64, f64)> {
    let classes = bank.class_embeddings();
    if classes.is_empty() {
        return Err(Error::InvalidArgument("bank has no class embeddings".into()));
    }
    let sims = classes
        .iter()
        .map(|e| cosine_similarity(embedding, e))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in sims.iter().enumerate() {
        if s > sims[best] {
            best = i;
        }
    }
    let p = tempered_softmax(&sims, temperature)?;
    Ok((best, sims[best], p[best]))
}

pub fn classify_kept(
    kept: &[Proposal],
    pyr: &Pyramid,
    bank: &PromptBank,
    temperature: f64,
    exec: Execution,
) -> Result<Vec<Classified>> {
    exec.try_map(kept, |p| {
        let emb = pooled_embedding(pyr, &p.bbox, DEFAULT_POOL_SIZE)?;
        let (class_id, max_cos, probability) = classify_embedding(&emb, bank, temperature)?;
        Ok(Classified {
            proposal: p.clone(),
            class_id,
            label: bank.class_label(class_id).unwrap_or_default().to_string(),
            max_cos,
            probability,
            low_confidence: max_cos < LOW_CONFIDENCE_COS,
        })
    })
}

/// Accuracy over objects that received a one-to-one match, plus the mean
/// margin between the true-class cosine and the best wrong-class cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub n_matched: usize,
    pub n_correct: usize,
    pub margin_sum: f64,
}

impl AccuracyStats {
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.n_correct, self.n_matched)
    }

    pub fn mean_margin(&self) -> Option<f64> {
        (self.n_matched > 0).then(|| self.margin_sum / self.n_matched as f64)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            n_matched: self.n_matched + other.n_matched,
            n_correct: self.n_correct + other.n_correct,
            margin_sum: self.margin_sum + other.margin_sum,
        }
    }
}

pub fn matched_accuracy(
    kept: &[Proposal],
    report: &RecallReport,
    pyr: &Pyramid,
    bank: &PromptBank,
) -> Result<AccuracyStats> {
    let classes = bank.class_embeddings();
    let mut stats = AccuracyStats { n_matched: 0, n_correct: 0, margin_sum: 0.0 };
    for m in &report.matches {
        let Some(pi) = m.matched_proposal else { continue };
        let emb = pooled_embedding(pyr, &kept[pi].bbox, DEFAULT_POOL_SIZE)?;
        let sims = classes
            .iter()
            .map(|e| cosine_similarity(&emb, e))
            .collect::<Result<Vec<f64>>>()?;
        let (pred, _, _) = classify_embedding(&emb, bank, 1.0)?;
        let wrong = sims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != m.class_id)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        stats.n_matched += 1;
        stats.n_correct += usize::from(pred == m.class_id);
        if wrong.is_finite() {
            stats.margin_sum += sims[m.class_id] - wrong;
        }
    }
    Ok(stats)
}
