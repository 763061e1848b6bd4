//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::time::{Duration, Instant};

use ovd_core::discovery::{build_cache, discover, merge_cached, score_proposal, CacheEntry, CandidateCache, DiscoveryConfig};
use ovd_core::encoder::{synthetic_bank, FrozenImageEncoder, PromptBank, SyntheticBankSpec, SyntheticEncoder, SyntheticScene};
use ovd_core::harness::eval::eval_recall;
use ovd_core::harness::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use ovd_core::harness::nvt::NvtTensor;
use ovd_core::harness::rpn::{simulate_rpn, RpnSimConfig};
use ovd_core::harness::scene::{gen_scene, SceneGenConfig};
use ovd_core::kfpn::{build_pyramid_with, KfpnConfig, Pyramid};
use ovd_core::losses::{alt_kd_losses, cons_loss, kd_loss, KdKind};
use ovd_core::roi::{iou, roi_align, BBox, Proposal, ProposalSource};
use ovd_core::rrpn::{nms, rrpn_pipeline, RrpnConfig};
use ovd_core::tensorops::{tempered_softmax, FeatureMap, ProjectionHead};
use ovd_core::Execution;
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn randn_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let data = (0..c * h * w).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
    FeatureMap::new(c, h, w, data).unwrap()
}

// ---------------------------------------------------------------- AC1

/// Bilinear read with border clamping, cell centers at integer coordinates.
fn oracle_bilinear(m: &FeatureMap, c: usize, y: f64, x: f64) -> f64 {
    let (_, h, w) = m.shape();
    let y = y.max(0.0).min((h - 1) as f64);
    let x = x.max(0.0).min((w - 1) as f64);
    let (iy, ix) = (y.floor() as usize, x.floor() as usize);
    let (jy, jx) = ((iy + 1).min(h - 1), (ix + 1).min(w - 1));
    let (ty, tx) = (y - iy as f64, x - ix as f64);
    let v = |a: usize, b: usize| m.get(c, a, b) as f64;
    v(iy, ix) * (1.0 - ty) * (1.0 - tx) + v(iy, jx) * (1.0 - ty) * tx + v(jy, ix) * ty * (1.0 - tx) + v(jy, jx) * ty * tx
}

fn ac1_roi_align() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (out, dense) = (7usize, 64usize);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = rng.random_range(1..=4);
        let h = rng.random_range(4..=20);
        let w = rng.random_range(4..=20);
        let stride = [4u32, 8, 16][rng.random_range(0..3)];
        let map = randn_map(&mut rng, c, h, w);
        let (ih, iw) = ((h as u32 * stride) as f32, (w as u32 * stride) as f32);
        let x1 = rng.random_range(-0.1 * iw..0.8 * iw);
        let y1 = rng.random_range(-0.1 * ih..0.8 * ih);
        let bw = rng.random_range(0.05 * iw..0.6 * iw);
        let bh = rng.random_range(0.05 * ih..0.6 * ih);
        let b = BBox::new(x1, y1, x1 + bw, y1 + bh);
        let got = roi_align(&map, stride, &b, out, out).map_err(e2s)?;

        let s = stride as f64;
        let (fx1, fy1) = (b.x1 as f64 / s - 0.5, b.y1 as f64 / s - 0.5);
        let (bin_w, bin_h) = (b.width() as f64 / s / out as f64, b.height() as f64 / s / out as f64);
        for ch in 0..c {
            for i in 0..out {
                for j in 0..out {
                    let mut acc = 0.0;
                    for sy in 0..dense {
                        let y = fy1 + (i as f64 + (sy as f64 + 0.5) / dense as f64) * bin_h;
                        for sx in 0..dense {
                            let x = fx1 + (j as f64 + (sx as f64 + 0.5) / dense as f64) * bin_w;
                            acc += oracle_bilinear(&map, ch, y, x);
                        }
                    }
                    let want = acc / (dense * dense) as f64;
                    worst = worst.max((got.get(ch, i, j) as f64 - want).abs());
                }
            }
        }
    }
    ensure(worst <= 2e-3, || format!("max abs error {worst:.3e} > 2e-3"))?;
    Ok(format!("50 pairs, max abs error {worst:.2e}"))
}

// ---------------------------------------------------------------- AC2

fn reference_nms(props: &[Proposal], t: f64) -> Vec<usize> {
    let mut suppressed = vec![false; props.len()];
    let mut keep = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..props.len() {
            if !suppressed[i] && best.is_none_or(|b| props[i].score_rpn > props[b].score_rpn) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        keep.push(b);
        for i in 0..props.len() {
            if iou(&props[b].bbox, &props[i].bbox) >= t {
                suppressed[i] = true;
            }
        }
    }
    keep
}

fn ac2_nms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut total_kept = 0;
    for inst in 0..200 {
        let n = rng.random_range(1..=100);
        let props: Vec<Proposal> = (0..n)
            .map(|_| {
                let x = rng.random_range(0.0..200.0f32);
                let y = rng.random_range(0.0..200.0f32);
                let b = BBox::new(x, y, x + rng.random_range(4.0..80.0), y + rng.random_range(4.0..80.0));
                // Quantized scores exercise tie handling.
                Proposal::rpn(b, rng.random_range(0..20u32) as f32 / 20.0)
            })
            .collect();
        let t = rng.random_range(0.3..0.8);
        let got: Vec<BBox> = nms(&props, t).iter().map(|p| p.bbox).collect();
        let want: Vec<BBox> = reference_nms(&props, t).into_iter().map(|i| props[i].bbox).collect();
        ensure(got == want, || format!("instance {inst}: kept sets differ"))?;
        total_kept += got.len();
    }
    Ok(format!("200 instances identical ({total_kept} boxes kept)"))
}

// ---------------------------------------------------------------- AC3

fn central_fd_rel_err(f: &dyn Fn(&[Vec<f64>]) -> f64, x: &[Vec<f64>], grad: &[Vec<f64>]) -> f64 {
    let h = 1e-3;
    let mut p = x.to_vec();
    let (mut gap, mut scale) = (0.0f64, 1e-12f64);
    for i in 0..x.len() {
        for j in 0..x[i].len() {
            let v = p[i][j];
            p[i][j] = v + h;
            let up = f(&p);
            p[i][j] = v - h;
            let down = f(&p);
            p[i][j] = v;
            let num = (up - down) / (2.0 * h);
            gap = gap.max((num - grad[i][j]).abs());
            scale = scale.max(num.abs()).max(grad[i][j].abs());
        }
    }
    gap / scale
}

fn randn_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn ac3_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let instances = 100;
    let mut worst = [0.0f64; 5];
    for _ in 0..instances {
        let d = rng.random_range(1..=64);
        let n = rng.random_range(1..=4);
        let c = randn_rows(&mut rng, n, d);
        // Keep every coordinate gap away from 0 and from the smooth-l1 kink at 1.
        let r: Vec<Vec<f64>> = c
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&x| {
                        let mag = if rng.random_bool(0.5) { rng.random_range(0.05..0.95) } else { rng.random_range(1.05..2.0) };
                        x + if rng.random_bool(0.5) { mag } else { -mag }
                    })
                    .collect()
            })
            .collect();
        let g = kd_loss(&r, &c).map_err(e2s)?;
        worst[0] = worst[0].max(central_fd_rel_err(&|x| kd_loss(x, &c).unwrap().value, &r, &g.grad));
        for (slot, kind) in [(1, KdKind::L1), (2, KdKind::SmoothL1), (3, KdKind::Cosine)] {
            let g = alt_kd_losses(&r, &c, kind).map_err(e2s)?;
            let e = central_fd_rel_err(&|x| alt_kd_losses(x, &c, kind).unwrap().value, &r, &g.grad);
            worst[slot] = worst[slot].max(e);
        }

        let k = rng.random_range(2..=8);
        let classes = randn_rows(&mut rng, k, d.max(2));
        let feats = randn_rows(&mut rng, n, d.max(2));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let tau = rng.random_range(0.05..1.0);
        let g = cons_loss(&feats, &classes, &labels, tau).map_err(e2s)?;
        let e = central_fd_rel_err(&|x| cons_loss(x, &classes, &labels, tau).unwrap().value, &feats, &g.grad);
        worst[4] = worst[4].max(e);
    }
    let names = ["l2", "l1", "smooth_l1", "cosine", "cons"];
    for (i, name) in names.iter().enumerate() {
        let tol = if i == 4 { 1e-3 } else { 1e-4 };
        ensure(worst[i] <= tol, || format!("{name}: relative error {:.3e} > {tol:e}", worst[i]))?;
    }
    Ok(format!(
        "{instances} instances each; worst rel err l2 {:.1e}, l1 {:.1e}, smooth_l1 {:.1e}, cosine {:.1e}, cons {:.1e}",
        worst[0], worst[1], worst[2], worst[3], worst[4]
    ))
}

// ---------------------------------------------------------------- AC4

fn ac4_kfpn_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (din, dout, h, w) = (768usize, 512usize, 16usize, 16usize);
    let weight: Vec<f32> = (0..dout * din).map(|_| rng.sample::<f64, _>(StandardNormal) as f32 * 0.03).collect();
    let bias: Vec<f32> = (0..dout).map(|_| rng.sample::<f64, _>(StandardNormal) as f32 * 0.01).collect();
    let head = ProjectionHead::new(dout, din, weight, bias).map_err(e2s)?;
    let before = head.checksum();
    let layers: Vec<FeatureMap> = (0..3).map(|_| randn_map(&mut rng, din, h, w)).collect();
    let cfg = KfpnConfig::new(head);

    let a = build_pyramid_with(&layers, &cfg, Execution::Parallel).map_err(e2s)?;
    let b = build_pyramid_with(&layers, &cfg, Execution::Parallel).map_err(e2s)?;
    let s = build_pyramid_with(&layers, &cfg, Execution::Sequential).map_err(e2s)?;

    ensure(a.levels().len() == 5, || format!("{} levels", a.levels().len()))?;
    let expected = [(4 * h, 4 * w), (2 * h, 2 * w), (h, w), (h / 2, w / 2), (h / 4, w / 4)];
    for (lvl, (eh, ew)) in a.levels().iter().zip(expected) {
        ensure(lvl.map.shape() == (dout, eh, ew), || {
            format!("{} has shape {:?}, want {:?}", lvl.name, lvl.map.shape(), (dout, eh, ew))
        })?;
    }
    let bits = |p: &Pyramid| -> Vec<u32> { p.levels().iter().flat_map(|l| l.map.data().iter().map(|v| v.to_bits())).collect() };
    ensure(bits(&a) == bits(&b), || "two runs differ".into())?;
    ensure(bits(&a) == bits(&s), || "sequential and parallel differ".into())?;
    ensure(cfg.head.checksum() == before, || "projection head changed".into())?;
    Ok(format!("5 levels x {dout} ch at 64/32/16/8/4 from a {h}x{w} base; bitwise stable; head checksum {before:016x}"))
}

// ---------------------------------------------------------------- AC5

fn default_bank() -> PromptBank {
    synthetic_bank(&SyntheticBankSpec::default()).unwrap()
}

fn scene_pyramid(bank: &PromptBank, scene: &SyntheticScene, w: f32) -> Result<Pyramid, String> {
    let enc = SyntheticEncoder::vit_b16(bank).map_err(e2s)?;
    let layers = enc.encode_layers(scene).map_err(e2s)?;
    let mut cfg = KfpnConfig::new(ProjectionHead::identity(bank.dim()).map_err(e2s)?);
    cfg.fusion_weight = w;
    build_pyramid_with(&layers, &cfg, Execution::default()).map_err(e2s)
}

fn rank_by(props: &[Proposal], key: impl Fn(&Proposal) -> f32, k: usize) -> Vec<BBox> {
    let mut idx: Vec<usize> = (0..props.len()).collect();
    idx.sort_by(|&a, &b| key(&props[b]).total_cmp(&key(&props[a])).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| props[i].bbox).collect()
}

fn ac5_degenerate_alpha() -> Outcome {
    let bank = default_bank();
    let mut checked = 0;
    for seed in 0..10u64 {
        let scene = gen_scene(&SceneGenConfig::default(), bank.n_base(), 4, seed).map_err(e2s)?;
        let pyr = scene_pyramid(&bank, &scene, 0.3)?;
        let raw = simulate_rpn(&scene, &RpnSimConfig::default()).map_err(e2s)?;
        for k in [20, 1000] {
            let cfg1 = RrpnConfig { alpha: 1.0, keep_topk: k, ..Default::default() };
            let got: Vec<BBox> = rrpn_pipeline(&raw, &pyr, &bank, &cfg1).map_err(e2s)?.iter().map(|p| p.bbox).collect();
            let survivors = nms(&raw, cfg1.nms_iou);
            ensure(got == rank_by(&survivors, |p| p.score_rpn, k), || format!("seed {seed} k {k}: alpha=1 differs from RPN ranking"))?;

            let cfg0 = RrpnConfig { alpha: 0.0, ..cfg1 };
            let got: Vec<BBox> = rrpn_pipeline(&raw, &pyr, &bank, &cfg0).map_err(e2s)?.iter().map(|p| p.bbox).collect();
            let conf: Vec<Proposal> = survivors
                .iter()
                .map(|p| {
                    let c = score_proposal(&pyr, &p.bbox, &bank, cfg0.temperature).unwrap().confidence as f32;
                    Proposal { score_kfpn: Some(c), ..p.clone() }
                })
                .collect();
            ensure(got == rank_by(&conf, |p| p.score_kfpn.unwrap(), k), || {
                format!("seed {seed} k {k}: alpha=0 differs from confidence ranking")
            })?;
            checked += 2;
        }
    }
    Ok(format!("{checked} rankings identical (10 scenes, k in {{20, 1000}})"))
}

// ---------------------------------------------------------------- AC6

fn ac6_discovery() -> Outcome {
    let bank = default_bank();
    let clean = SceneGenConfig { noise_sigma: 0.0, ..Default::default() };
    let mut novel_total = 0;
    for seed in 0..20u64 {
        let scene = gen_scene(&clean, bank.n_base(), 4, seed).map_err(e2s)?;
        let pyr = scene_pyramid(&bank, &scene, 0.3)?;
        let props: Vec<Proposal> = scene.objects.iter().map(|o| Proposal::rpn(o.bbox, 0.5)).collect();
        let gt_base: Vec<BBox> = scene.objects.iter().filter(|o| !o.is_novel).map(|o| o.bbox).collect();
        let found = discover(&pyr, &props, &gt_base, &bank, &DiscoveryConfig::default()).map_err(e2s)?;
        let mut got: Vec<[f32; 4]> = found.iter().map(|(p, _)| p.bbox.into()).collect();
        let mut want: Vec<[f32; 4]> = scene.objects.iter().filter(|o| o.is_novel).map(|o| o.bbox.into()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ensure(got == want, || format!("seed {seed}: discovered {got:?}, novel objects {want:?}"))?;
        novel_total += want.len();
    }

    // Capacity: exactly 150 foreground survivors, keep 100.
    let noisy = SceneGenConfig { noise_sigma: 0.1, objects: 8, novel_frac: 1.0, ..Default::default() };
    let scene = gen_scene(&noisy, bank.n_base(), 4, 77).map_err(e2s)?;
    let pyr = scene_pyramid(&bank, &scene, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut props = Vec::new();
    while props.len() < 150 {
        let o = &scene.objects[rng.random_range(0..scene.objects.len())];
        let (w, h) = (o.bbox.width(), o.bbox.height());
        let dx = rng.random_range(-0.15..0.15) * w;
        let dy = rng.random_range(-0.15..0.15) * h;
        let b = BBox::new((o.bbox.x1 + dx).max(0.0), (o.bbox.y1 + dy).max(0.0), (o.bbox.x2 + dx).min(256.0), (o.bbox.y2 + dy).min(256.0));
        if score_proposal(&pyr, &b, &bank, 0.05).map_err(e2s)?.is_foreground() {
            props.push(Proposal::rpn(b, 0.3));
        }
    }
    let found = discover(&pyr, &props, &[], &bank, &DiscoveryConfig::default()).map_err(e2s)?;
    let conf: Vec<f64> = props.iter().map(|p| score_proposal(&pyr, &p.bbox, &bank, 0.05).unwrap().confidence).collect();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| conf[b].partial_cmp(&conf[a]).unwrap());
    let want: Vec<BBox> = order[..100].iter().map(|&i| props[i].bbox).collect();
    let got: Vec<BBox> = found.iter().map(|(p, _)| p.bbox).collect();
    ensure(found.len() == 100, || format!("kept {} candidates", found.len()))?;
    ensure(got == want, || "top-100 differs from full-sort oracle".into())?;
    Ok(format!("20 clean scenes: {novel_total}/{novel_total} novel found, 0 false; 150 -> 100 matches full sort"))
}

// ---------------------------------------------------------------- AC7 / AC8

fn ensemble_report(cfg: ExperimentConfig) -> Result<ExperimentReport, String> {
    run_experiment(&cfg, Execution::default()).map_err(e2s)
}

fn ac7_rrpn_recall() -> Outcome {
    let cfg = ExperimentConfig { seeds: vec![0, 1], alpha_sweep: vec![1.0, 0.5], ..Default::default() };
    let scenes = cfg.ensemble.n_scenes * cfg.seeds.len();
    let r = ensemble_report(cfg)?;
    let one = r.variant("alpha=1").ok_or("missing alpha=1")?.mean;
    let half = r.variant("alpha=0.5").ok_or("missing alpha=0.5")?.mean;
    let gain = 100.0 * (half.recall_novel - one.recall_novel);
    let drop = 100.0 * (one.recall_base - half.recall_base);
    let detail = format!(
        "{scenes} scenes: novel recall {:.1}% -> {:.1}% (+{gain:.1} pts), base {:.1}% -> {:.1}% ({drop:+.1} pts drop)",
        100.0 * one.recall_novel,
        100.0 * half.recall_novel,
        100.0 * one.recall_base,
        100.0 * half.recall_base
    );
    ensure(gain >= 5.0 && drop <= 2.0, || detail.clone())?;
    Ok(detail)
}

fn ac8_fusion_weight() -> Outcome {
    let cfg = ExperimentConfig { seeds: vec![0, 1], w_sweep: vec![0.0, 0.3, 1.0], ..Default::default() };
    let r = ensemble_report(cfg)?;
    let m = |name: &str| r.variant(name).map(|v| v.mean).ok_or(format!("missing {name}"));
    let (w0, w3, w1) = (m("W=0")?, m("W=0.3")?, m("W=1")?);
    let detail = format!(
        "acc W=0 {:.2}%, W=0.3 {:.2}%, W=1 {:.2}%; margin {:.4} / {:.4} / {:.4}",
        100.0 * w0.acc,
        100.0 * w3.acc,
        100.0 * w1.acc,
        w0.margin,
        w3.margin,
        w1.margin
    );
    ensure(w3.acc >= w0.acc && w3.acc >= w1.acc, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- AC9

fn ac9_cache_round_trip() -> Outcome {
    let bank = default_bank();
    let cfg = SceneGenConfig { novel_frac: 0.5, ..Default::default() };
    let scene = gen_scene(&cfg, bank.n_base(), 4, 909).map_err(e2s)?;
    let pyr = scene_pyramid(&bank, &scene, 0.3)?;
    let raw = simulate_rpn(&scene, &RpnSimConfig::default()).map_err(e2s)?;
    let gt_base: Vec<BBox> = scene.objects.iter().filter(|o| !o.is_novel).map(|o| o.bbox).collect();
    let found = discover(&pyr, &raw, &gt_base, &bank, &DiscoveryConfig::default()).map_err(e2s)?;
    ensure(!found.is_empty(), || "no candidates discovered".into())?;
    let enc = SyntheticEncoder::vit_b16(&bank).map_err(e2s)?;
    let cache = build_cache(&enc, &scene, "scene-909", &found, (256, 256), (256, 256), 100).map_err(e2s)?;

    let dir = tempfile::tempdir().map_err(e2s)?;
    cache.save_dir(dir.path()).map_err(e2s)?;
    let loaded = CandidateCache::load_dir(dir.path()).map_err(e2s)?;
    let bits = |c: &CandidateCache| -> Vec<u32> {
        c.entries()
            .iter()
            .flat_map(|e| {
                let b: [f32; 4] = e.bbox.into();
                b.into_iter().chain(e.embedding.iter().copied()).chain([e.confidence])
            })
            .map(f32::to_bits)
            .collect()
    };
    ensure(bits(&cache) == bits(&loaded) && cache == loaded, || "round trip not bit-exact".into())?;

    let probe: Vec<Proposal> = loaded.entries().iter().map(|e| Proposal::rpn(e.bbox.translated(0.5, 0.0), 0.2)).collect();
    let merged = merge_cached(&probe, &loaded, 0.5);
    for (m, e) in merged.iter().zip(loaded.entries()) {
        ensure(m.source == ProposalSource::Cache && m.bbox == e.bbox, || "cached box not restored".into())?;
    }

    // Three-case fixture.
    let entry = |b: BBox| CacheEntry { bbox: b, embedding: vec![1.0, 0.0], confidence: 0.9 };
    let cached = BBox::new(0.0, 0.0, 10.0, 10.0);
    let one = CandidateCache::new("fixture", 100, vec![entry(cached)]).map_err(e2s)?;
    let empty = CandidateCache::new("fixture", 100, vec![]).map_err(e2s)?;
    let props = vec![
        Proposal::rpn(BBox::new(0.0, 0.0, 10.0, 6.0), 0.7),
        Proposal::rpn(BBox::new(0.0, 0.0, 10.0, 8.0), 0.6),
        Proposal::rpn(BBox::new(30.0, 30.0, 40.0, 40.0), 0.5),
    ];
    ensure(merge_cached(&props, &empty, 0.5) == props, || "empty cache changed proposals".into())?;
    let same = merge_cached(&[Proposal::rpn(cached, 0.1)], &one, 0.5);
    ensure(same[0].source == ProposalSource::Cache, || "identical box not replaced".into())?;
    let m = merge_cached(&props, &one, 0.5);
    ensure(m[1].bbox == cached && m[1].source == ProposalSource::Cache, || "IoU 0.8 proposal not replaced".into())?;
    ensure(m[0] == props[0] && m[2] == props[2], || "non-best proposals changed".into())?;
    Ok(format!("{} cached entries bit-exact after save/load; 3-case merge fixture correct", loaded.len()))
}

// ---------------------------------------------------------------- AC10

fn run_prop<S: Strategy>(name: &str, strat: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(PtConfig { cases: 256, failure_persistence: None, ..PtConfig::default() });
    runner.run(&strat, test).map_err(|e| format!("{name}: {e}"))
}

fn ac10_invariants() -> Outcome {
    let bank = default_bank();
    run_prop("foreground scale invariance", (any::<u64>(), 0.01f32..100.0), |(seed, lambda)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = randn_map(&mut rng, bank.dim(), 8, 8);
        let scaled = map.scaled(lambda).unwrap();
        let b = BBox::new(2.0, 3.0, 28.0, 30.0);
        let mk = |m: FeatureMap| {
            let levels = [("F2", 4u32), ("F3", 8), ("F4", 16), ("F5", 32), ("F6", 64)]
                .into_iter()
                .map(|(n, s)| ovd_core::kfpn::PyramidLevel { name: n.into(), stride: s, map: m.clone() })
                .collect();
            Pyramid::new(levels).unwrap()
        };
        let a = score_proposal(&mk(map), &b, &bank, 0.05).unwrap();
        let s = score_proposal(&mk(scaled), &b, &bank, 0.05).unwrap();
        prop_assert_eq!(a.is_foreground(), s.is_foreground());
        prop_assert!((a.confidence - s.confidence).abs() < 1e-6);
        Ok(())
    })?;
    run_prop("softmax argmax", (proptest::collection::vec(-5.0f64..5.0, 1..40), 0.01f64..10.0), |(v, t)| {
        let p = tempered_softmax(&v, t).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] > v[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
        Ok(())
    })?;
    run_prop("recall@k monotone", (any::<u64>(), 1usize..60), |(seed, n)| {
        let scene = gen_scene(&SceneGenConfig::default(), 12, 4, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let kept: Vec<Proposal> = (0..n)
            .map(|_| {
                let o = &scene.objects[rng.random_range(0..scene.objects.len())];
                Proposal::rpn(o.bbox.translated(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)), 0.5)
            })
            .collect();
        let mut prev = [0.0; 3];
        for k in 1..=n {
            let r = eval_recall(&kept, &scene, 0.5, k).unwrap();
            let cur = [r.recall_base.unwrap(), r.recall_novel.unwrap(), r.recall_all.unwrap()];
            prop_assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
        Ok(())
    })?;
    run_prop("nvt byte round trip", proptest::collection::vec(any::<u32>(), 0..300), |raw| {
        let data: Vec<f32> = raw.iter().map(|&b| f32::from_bits(b)).collect();
        let t = NvtTensor::new(vec![data.len() as u32], data).unwrap();
        let bytes = t.to_bytes();
        prop_assert_eq!(NvtTensor::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        Ok(())
    })?;
    Ok("scale invariance, softmax order, recall@k monotonicity, NVT round trip: 256 cases each".into())
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: "AC1", name: "RoI-Align vs dense oracle", limit: Some(Duration::from_secs(5)), run: ac1_roi_align },
        Criterion { id: "AC2", name: "NMS vs reference", limit: Some(Duration::from_secs(2)), run: ac2_nms },
        Criterion { id: "AC3", name: "gradient checks", limit: Some(Duration::from_secs(10)), run: ac3_gradients },
        Criterion { id: "AC4", name: "K-FPN contract", limit: None, run: ac4_kfpn_contract },
        Criterion { id: "AC5", name: "degenerate fusion weights", limit: None, run: ac5_degenerate_alpha },
        Criterion { id: "AC6", name: "discovery on planted scenes", limit: None, run: ac6_discovery },
        Criterion { id: "AC7", name: "re-weighting raises novel recall", limit: Some(Duration::from_secs(60)), run: ac7_rrpn_recall },
        Criterion { id: "AC8", name: "interior fusion weight", limit: None, run: ac8_fusion_weight },
        Criterion { id: "AC9", name: "candidate cache round trip", limit: None, run: ac9_cache_round_trip },
        Criterion { id: "AC10", name: "invariant suite", limit: None, run: ac10_invariants },
    ];
    let suite_start = Instant::now();
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(d), Some(limit)) if took > limit => Err(format!("{d}; took {took:.2?} > {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("[PASS] {} {}: {detail} ({took:.2?})", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {} {}: {detail} ({took:.2?})", c.id, c.name);
            }
        }
    }
    let total = suite_start.elapsed();
    println!("acceptance: {}/{} passed in {total:.2?}", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
