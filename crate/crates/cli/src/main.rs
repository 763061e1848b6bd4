//! `ovd`: command-line driver for the synthetic open-vocabulary pipeline.
//!
//! Exit codes: 0 on success, 2 on invalid input, 1 on I/O or internal errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ovd_core::discovery::{build_cache, discover, DiscoveryConfig};
use ovd_core::encoder::{
    save_layer_features, synthetic_bank, FrozenImageEncoder, NvtDirEncoder, PromptBank, SyntheticBankSpec,
    SyntheticEncoder, SyntheticScene,
};
use ovd_core::harness::eval::{classify_kept, eval_recall};
use ovd_core::harness::experiment::{run_experiment, ExperimentConfig};
use ovd_core::harness::nvt::NvtTensor;
use ovd_core::harness::rpn::{simulate_rpn, RpnSimConfig};
use ovd_core::harness::scene::{gen_scene, SceneGenConfig};
use ovd_core::kfpn::{build_pyramid, KfpnConfig, Pyramid};
use ovd_core::losses::{alt_kd_losses, cons_loss, finite_difference_error, KdKind};
use ovd_core::roi::{load_proposals, save_proposals, BBox};
use ovd_core::rrpn::{rrpn_pipeline, RrpnConfig};
use ovd_core::tensorops::ProjectionHead;
use ovd_core::{Error, Execution, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ovd", version, about = "Synthetic open-vocabulary proposal pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic prompt bank.
    GenBank {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 12)]
        n_base: usize,
        #[arg(long, default_value_t = 4)]
        n_novel: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a synthetic scene.
    GenScene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        objects: usize,
        #[arg(long, default_value_t = 0.25)]
        novel_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f32,
        #[arg(long, default_value_t = 256)]
        height: u32,
        #[arg(long, default_value_t = 256)]
        width: u32,
        /// Take class counts from this bank instead of the defaults (12 base, 4 novel).
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Encode a scene and build its feature pyramid.
    Encode {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Synthetic)]
        backend: Backend,
        /// Prompt bank (synthetic backend).
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Directory with precomputed layer features (nvt-dir backend).
        #[arg(long)]
        features: Option<PathBuf>,
        /// Projection weights as a 2-D NVT (out x in); identity if absent.
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        fusion_weight: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit proposals from the base-class RPN stand-in.
    Propose {
        #[arg(long)]
        scene: PathBuf,
        /// JSON file with RPN simulation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discover latent novel candidates and cache their frozen embeddings.
    BuildCache {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Proposals to search; simulated if absent.
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        capacity: usize,
        #[arg(long, default_value_t = 0.05)]
        temperature: f64,
        #[arg(long)]
        image_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse objectness with prompt confidence and keep the top proposals.
    Rerank {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        pyramid: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// JSON file with re-ranking settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        nms_iou: Option<f64>,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Also write class predictions for the kept proposals here.
        #[arg(long)]
        classify: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall of kept proposals against the scene objects.
    EvalRecall {
        #[arg(long)]
        kept: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a distillation or alignment loss and check its gradient.
    Losses {
        /// Stacked RoI features (N x D).
        #[arg(long)]
        roi: PathBuf,
        /// Stacked targets (N x D); class embeddings (K x D) for `cons`.
        #[arg(long)]
        cached: PathBuf,
        #[arg(long, value_enum, default_value_t = LossKind::L2)]
        kind: LossKind,
        /// JSON array of class indices (cons only).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        temperature: f64,
    },
    /// Run a seeded ensemble experiment and write JSON and CSV reports.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Synthetic,
    NvtDir,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LossKind {
    L2,
    L1,
    SmoothL1,
    Cosine,
    Cons,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

fn load_head(path: Option<&Path>, dim: usize) -> Result<ProjectionHead> {
    let Some(path) = path else {
        return ProjectionHead::identity(dim);
    };
    let t = NvtTensor::load(path)?;
    let [out, inp] = t.dims()[..] else {
        return Err(Error::Shape(format!("projection weights need 2 dims, got {:?}", t.dims())));
    };
    ProjectionHead::new(out as usize, inp as usize, t.data().to_vec(), vec![0.0; out as usize])
}

fn synthetic_pyramid(scene: &SyntheticScene, bank: &PromptBank) -> Result<Pyramid> {
    let enc = SyntheticEncoder::vit_b16(bank)?;
    build_pyramid(&enc.encode_layers(scene)?, &KfpnConfig::new(ProjectionHead::identity(bank.dim())?))
}

fn rows_f64(path: &Path) -> Result<Vec<Vec<f64>>> {
    let t = NvtTensor::load(path)?;
    if t.dims().len() != 2 {
        return Err(Error::Shape(format!("{} must be a 2-D stack, got dims {:?}", path.display(), t.dims())));
    }
    Ok(t.to_rows()?
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenBank { out, dim, n_base, n_novel, seed } => {
            let bank = synthetic_bank(&SyntheticBankSpec { dim, n_base, n_novel, seed, ..Default::default() })?;
            bank.save(&out)?;
            let (fg, bg, b, n) = bank.group_sizes();
            print(json!({"out": out, "dim": dim, "foreground": fg, "background": bg, "base": b, "novel": n}));
        }
        Command::GenScene { out, objects, novel_frac, seed, sigma, height, width, bank } => {
            let (n_base, n_novel) = match bank {
                Some(p) => {
                    let b = PromptBank::load(&p)?;
                    (b.n_base(), b.n_classes() - b.n_base())
                }
                None => (12, 4),
            };
            let cfg = SceneGenConfig { h: height, w: width, objects, novel_frac, noise_sigma: sigma, ..Default::default() };
            let scene = gen_scene(&cfg, n_base, n_novel, seed)?;
            scene.save(&out)?;
            let novel = scene.objects.iter().filter(|o| o.is_novel).count();
            print(json!({"out": out, "objects": scene.objects.len(), "novel": novel, "seed": seed}));
        }
        Command::Encode { scene, backend, bank, features, head, fusion_weight, out } => {
            let scene = SyntheticScene::load(&scene)?;
            let encoder: Box<dyn FrozenImageEncoder> = match backend {
                Backend::Synthetic => {
                    let bank = bank.ok_or_else(|| usage("--bank is required for the synthetic backend"))?;
                    Box::new(SyntheticEncoder::vit_b16(&PromptBank::load(&bank)?)?)
                }
                Backend::NvtDir => {
                    let dir = features.ok_or_else(|| usage("--features is required for the nvt-dir backend"))?;
                    Box::new(NvtDirEncoder::load(&dir)?)
                }
            };
            let layers = encoder.encode_layers(&scene)?;
            let indices = encoder.layer_indices().to_vec();
            if indices.len() < 3 {
                return Err(usage(format!("encoder exposes {} layers, need 3", indices.len())));
            }
            let picks = [indices[indices.len() - 3], indices[indices.len() - 2], indices[indices.len() - 1]];
            let picked = encoder.encode_picked(&scene, &picks)?;
            let mut cfg = KfpnConfig::new(load_head(head.as_deref(), encoder.feature_dim())?);
            cfg.layer_picks = picks;
            cfg.fusion_weight = fusion_weight;
            cfg.target_strides = KfpnConfig::strides_for_patch(encoder.patch_stride())?;
            let pyr = build_pyramid(&picked, &cfg)?;
            save_layer_features(&out.join("layers"), &indices, &layers, encoder.patch_stride())?;
            pyr.save_dir(&out)?;
            let levels: Vec<_> = pyr
                .levels()
                .iter()
                .map(|l| json!({"name": l.name, "stride": l.stride, "shape": l.map.shape()}))
                .collect();
            print(json!({"out": out, "levels": levels, "head_checksum": format!("{:016x}", cfg.head.checksum())}));
        }
        Command::Propose { scene, config, out } => {
            let scene = SyntheticScene::load(&scene)?;
            let cfg: RpnSimConfig = match config {
                Some(p) => read_json(&p)?,
                None => RpnSimConfig::default(),
            };
            let props = simulate_rpn(&scene, &cfg)?;
            save_proposals(&out, &props)?;
            print(json!({"out": out, "proposals": props.len()}));
        }
        Command::BuildCache { scene: scene_path, bank, proposals, capacity, temperature, image_id, out } => {
            let scene = SyntheticScene::load(&scene_path)?;
            let bank = PromptBank::load(&bank)?;
            let pyr = synthetic_pyramid(&scene, &bank)?;
            let props = match proposals {
                Some(p) => load_proposals(&p)?,
                None => simulate_rpn(&scene, &RpnSimConfig::default())?,
            };
            let gt_base: Vec<BBox> = scene.objects.iter().filter(|o| !o.is_novel).map(|o| o.bbox).collect();
            let cfg = DiscoveryConfig { temperature, capacity, ..Default::default() };
            let found = discover(&pyr, &props, &gt_base, &bank, &cfg)?;
            let id = image_id.unwrap_or_else(|| {
                scene_path.file_stem().map_or("scene".into(), |s| s.to_string_lossy().into_owned())
            });
            let size = (scene.h, scene.w);
            let enc = SyntheticEncoder::vit_b16(&bank)?;
            let cache = build_cache(&enc, &scene, &id, &found, size, size, capacity)?;
            cache.save_dir(&out)?;
            print(json!({"out": out, "image_id": id, "entries": cache.len(), "capacity": capacity}));
        }
        Command::Rerank { proposals, pyramid, bank, config, alpha, nms_iou, topk, temperature, classify, out } => {
            let mut cfg: RrpnConfig = match config {
                Some(p) => read_json(&p)?,
                None => RrpnConfig::default(),
            };
            cfg.alpha = alpha.unwrap_or(cfg.alpha);
            cfg.nms_iou = nms_iou.unwrap_or(cfg.nms_iou);
            cfg.keep_topk = topk.unwrap_or(cfg.keep_topk);
            cfg.temperature = temperature.unwrap_or(cfg.temperature);
            let raw = load_proposals(&proposals)?;
            let pyr = Pyramid::load_dir(&pyramid)?;
            let bank = PromptBank::load(&bank)?;
            let kept = rrpn_pipeline(&raw, &pyr, &bank, &cfg)?;
            save_proposals(&out, &kept)?;
            if let Some(path) = classify {
                let labeled = classify_kept(&kept, &pyr, &bank, cfg.temperature, Execution::default())?;
                write_json(&path, &labeled)?;
            }
            print(json!({"out": out, "input": raw.len(), "kept": kept.len(), "alpha": cfg.alpha}));
        }
        Command::EvalRecall { kept, scene, k, iou, out } => {
            let kept = load_proposals(&kept)?;
            let scene = SyntheticScene::load(&scene)?;
            let report = eval_recall(&kept, &scene, iou, k)?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            print(json!({
                "k": report.k,
                "iou_match": report.iou_match,
                "recall_base": report.recall_base,
                "recall_novel": report.recall_novel,
                "recall_all": report.recall_all,
            }));
        }
        Command::Losses { roi, cached, kind, labels, temperature } => {
            let r = rows_f64(&roi)?;
            let c = rows_f64(&cached)?;
            let (value, grad, err) = if kind == LossKind::Cons {
                let path = labels.ok_or_else(|| usage("--labels is required for the cons loss"))?;
                let y: Vec<usize> = read_json(&path)?;
                let lg = cons_loss(&r, &c, &y, temperature)?;
                let err = finite_difference_error(|x| cons_loss(x, &c, &y, temperature).map_or(f64::NAN, |l| l.value), &r, &lg.grad, 1e-3);
                (lg.value, lg.grad_checksum(), err)
            } else {
                let k = match kind {
                    LossKind::L2 => KdKind::L2,
                    LossKind::L1 => KdKind::L1,
                    LossKind::SmoothL1 => KdKind::SmoothL1,
                    _ => KdKind::Cosine,
                };
                let lg = alt_kd_losses(&r, &c, k)?;
                let err = finite_difference_error(|x| alt_kd_losses(x, &c, k).map_or(f64::NAN, |l| l.value), &r, &lg.grad, 1e-3);
                (lg.value, lg.grad_checksum(), err)
            };
            print(json!({"value": value, "grad_checksum": grad, "fd_max_rel_err": err}));
        }
        Command::Experiment { config, out, sequential } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exec = if sequential { Execution::Sequential } else { Execution::default() };
            let report = run_experiment(&cfg, exec)?;
            report.save_dir(&out)?;
            let summary: Vec<_> = report
                .variants
                .iter()
                .map(|v| {
                    json!({
                        "variant": v.variant.name,
                        "recall_base": v.mean.recall_base,
                        "recall_novel": v.mean.recall_novel,
                        "acc": v.mean.acc,
                    })
                })
                .collect();
            print(json!({"out": out, "variants": summary}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
