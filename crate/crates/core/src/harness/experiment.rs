//! Seeded ensembles of synthetic scenes run through the full proposal
//! pipeline under several variants (fusion weight, re-weighting on/off).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{synthetic_bank, FrozenImageEncoder, PromptBank, SyntheticBankSpec, SyntheticEncoder};
use crate::error::{Error, Result};
use crate::harness::eval::{eval_recall, matched_accuracy, AccuracyStats};
use crate::harness::rpn::{simulate_rpn, RpnSimConfig};
use crate::harness::scene::{gen_scene, SceneGenConfig};
use crate::kfpn::{build_pyramid_with, KfpnConfig};
use crate::par::Execution;
use crate::roi::Proposal;
use crate::rrpn::{nms, rerank_topk, rrpn_pipeline, RrpnConfig};
use crate::tensorops::ProjectionHead;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Scenes per seed.
    pub n_scenes: usize,
    pub scene: SceneGenConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_scenes: 50,
            scene: SceneGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Proposals kept after re-ranking, and the recall cutoff.
    pub k: usize,
    pub iou_match: f64,
    pub temperature: f64,
    pub nms_iou: f64,
    pub layer_picks: [usize; 3],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 20,
            iou_match: 0.5,
            temperature: 0.05,
            nms_iou: 0.7,
            layer_picks: [5, 7, 11],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_w")]
    pub w: f32,
    /// With re-weighting off, proposals are ranked by objectness alone.
    #[serde(default = "default_true")]
    pub rrpn: bool,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_w() -> f32 {
    0.3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    pub seeds: Vec<u64>,
    pub bank: SyntheticBankSpec,
    pub rpn: RpnSimConfig,
    pub pipeline: PipelineConfig,
    pub variants: Vec<Variant>,
    /// Expands to one re-weighting variant per alpha, at the default W.
    pub alpha_sweep: Vec<f64>,
    /// Expands to one variant per W, at the default alpha.
    pub w_sweep: Vec<f32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            seeds: vec![0],
            bank: SyntheticBankSpec::default(),
            rpn: RpnSimConfig::default(),
            pipeline: PipelineConfig::default(),
            variants: Vec::new(),
            alpha_sweep: Vec::new(),
            w_sweep: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Explicit variants followed by sweep expansions.
    pub fn all_variants(&self) -> Vec<Variant> {
        let mut out = self.variants.clone();
        out.extend(self.alpha_sweep.iter().map(|&alpha| Variant {
            name: format!("alpha={alpha}"),
            alpha,
            w: default_w(),
            rrpn: true,
        }));
        out.extend(self.w_sweep.iter().map(|&w| Variant {
            name: format!("W={w}"),
            alpha: default_alpha(),
            w,
            rrpn: true,
        }));
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.scene.validate()?;
        self.rpn.validate()?;
        if self.ensemble.n_scenes == 0 || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one scene and one seed".into()));
        }
        let variants = self.all_variants();
        if variants.is_empty() {
            return Err(Error::InvalidArgument("no variants configured".into()));
        }
        for v in &variants {
            if !(0.0..=1.0).contains(&v.alpha) || !(0.0..=1.0).contains(&v.w) {
                return Err(Error::InvalidArgument(format!("variant '{}' has alpha or W outside [0, 1]", v.name)));
            }
        }
        let p = &self.pipeline;
        if p.k == 0 || !(p.iou_match > 0.0 && p.iou_match < 1.0) {
            return Err(Error::InvalidArgument("pipeline needs k >= 1 and iou_match in (0, 1)".into()));
        }
        self.rrpn_config(&variants[0]).validate()
    }

    fn rrpn_config(&self, v: &Variant) -> RrpnConfig {
        RrpnConfig {
            alpha: v.alpha,
            nms_iou: self.pipeline.nms_iou,
            keep_topk: self.pipeline.k,
            temperature: self.pipeline.temperature,
            exec: Execution::Sequential,
        }
    }

    /// Scene seed for scene `i` of replicate `seed`.
    pub fn scene_seed(seed: u64, i: usize) -> u64 {
        seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
    }
}

/// Counts for one variant on one scene.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Tally {
    base: (usize, usize),
    novel: (usize, usize),
    acc: Option<AccuracyStats>,
}

impl Tally {
    fn merge(self, o: Self) -> Self {
        Self {
            base: (self.base.0 + o.base.0, self.base.1 + o.base.1),
            novel: (self.novel.0 + o.novel.0, self.novel.1 + o.novel.1),
            acc: match (self.acc, o.acc) {
                (Some(a), Some(b)) => Some(a.merge(b)),
                (a, b) => a.or(b),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall_base: f64,
    pub recall_novel: f64,
    pub recall_all: f64,
    /// Top-1 accuracy over objects matched one-to-one by a kept proposal.
    pub acc: f64,
    /// Mean true-class cosine minus best wrong-class cosine on matched objects.
    pub margin: f64,
}

impl Metrics {
    fn from_tally(t: &Tally) -> Self {
        let r = |(hit, n): (usize, usize)| if n == 0 { 0.0 } else { hit as f64 / n as f64 };
        let acc = t.acc.unwrap_or(AccuracyStats { n_matched: 0, n_correct: 0, margin_sum: 0.0 });
        Self {
            recall_base: r(t.base),
            recall_novel: r(t.novel),
            recall_all: r((t.base.0 + t.novel.0, t.base.1 + t.novel.1)),
            acc: acc.accuracy().unwrap_or(0.0),
            margin: acc.mean_margin().unwrap_or(0.0),
        }
    }

    fn fields(&self) -> [f64; 5] {
        [self.recall_base, self.recall_novel, self.recall_all, self.acc, self.margin]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        Self {
            recall_base: f[0],
            recall_novel: f[1],
            recall_all: f[2],
            acc: f[3],
            margin: f[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub per_seed: Vec<SeedResult>,
    pub mean: Metrics,
    /// Population standard deviation over seeds.
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_scenes: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantReport>,
}

impl ExperimentReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.variant.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (variant, seed).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "alpha", "W", "seed", "recall_base", "recall_novel", "recall_all", "acc"])?;
        for v in &self.variants {
            for s in &v.per_seed {
                let m = &s.metrics;
                w.write_record([
                    v.variant.name.clone(),
                    v.variant.alpha.to_string(),
                    v.variant.w.to_string(),
                    s.seed.to_string(),
                    m.recall_base.to_string(),
                    m.recall_novel.to_string(),
                    m.recall_all.to_string(),
                    m.acc.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("csv output", e))
    }

    /// Writes `report.json` and `results.csv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv_path = dir.join("results.csv");
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn run_scene(
    cfg: &ExperimentConfig,
    bank: &PromptBank,
    encoder: &SyntheticEncoder,
    variants: &[Variant],
    scene_seed: u64,
) -> Result<Vec<Tally>> {
    let scene = gen_scene(&cfg.ensemble.scene, bank.n_base(), bank.n_classes() - bank.n_base(), scene_seed)?;
    let layers = encoder.encode_picked(&scene, &cfg.pipeline.layer_picks)?;
    let raw = simulate_rpn(&scene, &cfg.rpn)?;
    let head = ProjectionHead::identity(bank.dim())?;
    let mut kfpn = KfpnConfig::new(head);
    kfpn.layer_picks = cfg.pipeline.layer_picks;
    kfpn.target_strides = KfpnConfig::strides_for_patch(encoder.patch_stride())?;

    let mut pyramids: Vec<(f32, crate::kfpn::Pyramid)> = Vec::new();
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let pi = match pyramids.iter().position(|(w, _)| *w == v.w) {
            Some(i) => i,
            None => {
                kfpn.fusion_weight = v.w;
                pyramids.push((v.w, build_pyramid_with(&layers, &kfpn, Execution::Sequential)?));
                pyramids.len() - 1
            }
        };
        let pyr = &pyramids[pi].1;
        let kept: Vec<Proposal> = if v.rrpn {
            rrpn_pipeline(&raw, pyr, bank, &cfg.rrpn_config(v))?
        } else {
            let ranked: Vec<Proposal> = nms(&raw, cfg.pipeline.nms_iou)
                .into_iter()
                .map(|mut p| {
                    p.score_fused = Some(p.score_rpn);
                    p
                })
                .collect();
            rerank_topk(&ranked, cfg.pipeline.k)?
        };
        let report = eval_recall(&kept, &scene, cfg.pipeline.iou_match, cfg.pipeline.k)?;
        let acc = matched_accuracy(&kept, &report, pyr, bank)?;
        out.push(Tally {
            base: (report.recalled(Some(false)), report.n_base),
            novel: (report.recalled(Some(true)), report.n_novel),
            acc: Some(acc),
        });
    }
    Ok(out)
}

/// Runs every variant on every scene of every seed. Scenes run on `exec`;
/// aggregation is a sequential fold, so the report does not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    cfg.validate()?;
    let bank = synthetic_bank(&cfg.bank)?;
    let encoder = SyntheticEncoder::vit_b16(&bank)?;
    let variants = cfg.all_variants();

    let jobs: Vec<(usize, u64)> = cfg
        .seeds
        .iter()
        .enumerate()
        .flat_map(|(si, &seed)| (0..cfg.ensemble.n_scenes).map(move |i| (si, ExperimentConfig::scene_seed(seed, i))))
        .collect();
    let results = exec.try_map(&jobs, |&(_, scene_seed)| run_scene(cfg, &bank, &encoder, &variants, scene_seed))?;

    let mut per_seed = vec![vec![Tally::default(); variants.len()]; cfg.seeds.len()];
    for ((si, _), tallies) in jobs.iter().zip(results) {
        for (acc, t) in per_seed[*si].iter_mut().zip(tallies) {
            *acc = acc.merge(t);
        }
    }

    let reports = variants
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let seeds: Vec<SeedResult> = cfg
                .seeds
                .iter()
                .zip(&per_seed)
                .map(|(&seed, tallies)| SeedResult {
                    seed,
                    metrics: Metrics::from_tally(&tallies[vi]),
                })
                .collect();
            let n = seeds.len() as f64;
            let mut mean = [0.0; 5];
            for s in &seeds {
                for (m, f) in mean.iter_mut().zip(s.metrics.fields()) {
                    *m += f / n;
                }
            }
            let mut var = [0.0; 5];
            for s in &seeds {
                for ((v, f), m) in var.iter_mut().zip(s.metrics.fields()).zip(mean) {
                    *v += (f - m).powi(2) / n;
                }
            }
            VariantReport {
                variant: v.clone(),
                per_seed: seeds,
                mean: Metrics::from_fields(mean),
                std: Metrics::from_fields(var.map(f64::sqrt)),
            }
        })
        .collect();
    Ok(ExperimentReport {
        n_scenes: cfg.ensemble.n_scenes,
        seeds: cfg.seeds.clone(),
        variants: reports,
    })
}
