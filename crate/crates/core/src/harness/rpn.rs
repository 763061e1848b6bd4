//! A generative stand-in for a region proposal network trained on base
//! classes only: objects of base classes get confident proposals, novel
//! objects get proposals with low objectness, and random background boxes
//! fill the rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::SyntheticScene;
use crate::error::{Error, Result};
use crate::roi::{BBox, Proposal};

const RPN_STREAM: u64 = 1 << 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpnSimConfig {
    /// Jittered proposals emitted per object.
    pub per_object: usize,
    /// Std of the center shift, as a fraction of the object side.
    pub center_jitter: f64,
    /// Std of the log side-length scale.
    pub size_jitter: f64,
    pub n_background: usize,
    pub background_min_size: f32,
    pub background_max_size: f32,
    pub base_rpn_score: f64,
    pub novel_rpn_score: f64,
    pub background_rpn_score: f64,
    /// Std of every score draw; draws are clamped to `[0, 1]`.
    pub score_std: f64,
    /// Mixed into the scene seed, so several RPN draws can share a scene.
    pub seed_offset: u64,
}

impl Default for RpnSimConfig {
    fn default() -> Self {
        Self {
            per_object: 3,
            center_jitter: 0.05,
            size_jitter: 0.08,
            n_background: 100,
            background_min_size: 16.0,
            background_max_size: 128.0,
            base_rpn_score: 0.9,
            novel_rpn_score: 0.25,
            background_rpn_score: 0.1,
            score_std: 0.15,
            seed_offset: 0,
        }
    }
}

impl RpnSimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("base_rpn_score", self.base_rpn_score),
            ("novel_rpn_score", self.novel_rpn_score),
            ("background_rpn_score", self.background_rpn_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("center_jitter", self.center_jitter),
            ("size_jitter", self.size_jitter),
            ("score_std", self.score_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} {v} must be >= 0")));
            }
        }
        if !(self.background_min_size >= 1.0 && self.background_min_size <= self.background_max_size) {
            return Err(Error::InvalidArgument("background box sizes must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Emits jittered object proposals (objects in scene order) followed by
/// background boxes. Deterministic in `(scene.seed, cfg)`.
pub fn simulate_rpn(scene: &SyntheticScene, cfg: &RpnSimConfig) -> Result<Vec<Proposal>> {
    scene.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ cfg.seed_offset.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(RPN_STREAM);
    let (w, h) = (scene.w as f64, scene.h as f64);
    let unit = normal(0.0, 1.0)?;
    let score = |rng: &mut ChaCha8Rng, mean: f64| -> Result<f32> {
        Ok(normal(mean, cfg.score_std)?.sample(rng).clamp(0.0, 1.0) as f32)
    };
    let clip = |x1: f64, y1: f64, x2: f64, y2: f64| {
        let (x1, x2) = (x1.clamp(0.0, w - 1.0), x2.clamp(1.0, w));
        let (y1, y2) = (y1.clamp(0.0, h - 1.0), y2.clamp(1.0, h));
        BBox::new(x1 as f32, y1 as f32, x2.max(x1 + 1.0) as f32, y2.max(y1 + 1.0) as f32)
    };

    let mut out = Vec::with_capacity(scene.objects.len() * cfg.per_object + cfg.n_background);
    for o in &scene.objects {
        let (bw, bh) = (o.bbox.width() as f64, o.bbox.height() as f64);
        let (cx, cy) = (o.bbox.x1 as f64 + bw / 2.0, o.bbox.y1 as f64 + bh / 2.0);
        let mean = if o.is_novel { cfg.novel_rpn_score } else { cfg.base_rpn_score };
        for _ in 0..cfg.per_object {
            let jx = cx + cfg.center_jitter * bw * unit.sample(&mut rng);
            let jy = cy + cfg.center_jitter * bh * unit.sample(&mut rng);
            let jw = bw * (cfg.size_jitter * unit.sample(&mut rng)).exp();
            let jh = bh * (cfg.size_jitter * unit.sample(&mut rng)).exp();
            let b = clip(jx - jw / 2.0, jy - jh / 2.0, jx + jw / 2.0, jy + jh / 2.0);
            out.push(Proposal::rpn(b, score(&mut rng, mean)?));
        }
    }
    let (lo, hi) = (cfg.background_min_size as f64, cfg.background_max_size as f64);
    for _ in 0..cfg.n_background {
        let bw = rng.random_range(lo..=hi).min(w);
        let bh = rng.random_range(lo..=hi).min(h);
        let x = rng.random_range(0.0..=(w - bw));
        let y = rng.random_range(0.0..=(h - bh));
        let b = clip(x, y, x + bw, y + bh);
        out.push(Proposal::rpn(b, score(&mut rng, cfg.background_rpn_score)?));
    }
    Ok(out)
}
