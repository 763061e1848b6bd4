//! Seeded synthetic scene layouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{SceneObject, SyntheticScene};
use crate::error::{Error, Result};
use crate::roi::BBox;

/// RNG stream for layouts, well clear of the per-layer noise streams.
const LAYOUT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    pub h: u32,
    pub w: u32,
    pub objects: usize,
    /// Fraction of objects drawn from novel classes (rounded).
    pub novel_frac: f64,
    pub noise_sigma: f32,
    /// Object side lengths are drawn from `[min_size, max_size]` pixels.
    pub min_size: f32,
    pub max_size: f32,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            h: 256,
            w: 256,
            objects: 8,
            novel_frac: 0.25,
            noise_sigma: 0.1,
            min_size: 32.0,
            max_size: 80.0,
        }
    }
}

impl SceneGenConfig {
    pub fn n_novel(&self) -> usize {
        (self.objects as f64 * self.novel_frac).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Err(Error::InvalidArgument("scene size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.novel_frac) {
            return Err(Error::InvalidArgument(format!("novel_frac {} outside [0, 1]", self.novel_frac)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        let limit = self.h.min(self.w) as f32;
        if !(self.min_size >= 1.0 && self.min_size <= self.max_size && self.max_size <= limit) {
            return Err(Error::InvalidArgument(format!(
                "object sizes [{}, {}] must satisfy 1 <= min <= max <= {limit}",
                self.min_size, self.max_size
            )));
        }
        Ok(())
    }
}

/// Lays out `cfg.objects` pairwise-disjoint boxes with integer corners.
///
/// The first `n_novel` objects take random novel classes
/// (`n_base..n_base + n_novel_classes`), the rest random base classes; the
/// list is then shuffled.
pub fn gen_scene(cfg: &SceneGenConfig, n_base: usize, n_novel_classes: usize, seed: u64) -> Result<SyntheticScene> {
    cfg.validate()?;
    let n_novel = cfg.n_novel();
    if (n_novel > 0 && n_novel_classes == 0) || (cfg.objects > n_novel && n_base == 0) {
        return Err(Error::InvalidArgument(format!(
            "{n_novel} novel / {} base objects need classes of each kind ({n_novel_classes} novel, {n_base} base)",
            cfg.objects - n_novel
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(LAYOUT_STREAM);

    let mut boxes: Vec<BBox> = Vec::with_capacity(cfg.objects);
    let max_tries = 10_000;
    for _ in 0..cfg.objects {
        let mut tries = 0;
        let b = loop {
            let bw = rng.random_range(cfg.min_size..=cfg.max_size).round();
            let bh = rng.random_range(cfg.min_size..=cfg.max_size).round();
            let x = rng.random_range(0.0..=(cfg.w as f32 - bw)).floor();
            let y = rng.random_range(0.0..=(cfg.h as f32 - bh)).floor();
            let b = BBox::new(x, y, x + bw, y + bh);
            if boxes.iter().all(|o| disjoint(o, &b)) {
                break b;
            }
            tries += 1;
            if tries == max_tries {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {} disjoint objects in {}x{}",
                    cfg.objects, cfg.h, cfg.w
                )));
            }
        };
        boxes.push(b);
    }

    let mut objects: Vec<SceneObject> = boxes
        .into_iter()
        .enumerate()
        .map(|(i, bbox)| {
            let class_id = if i < n_novel {
                n_base + rng.random_range(0..n_novel_classes)
            } else {
                rng.random_range(0..n_base)
            };
            SceneObject {
                bbox,
                class_id,
                is_novel: i < n_novel,
            }
        })
        .collect();
    for i in (1..objects.len()).rev() {
        objects.swap(i, rng.random_range(0..=i));
    }
    let scene = SyntheticScene {
        h: cfg.h,
        w: cfg.w,
        seed,
        noise_sigma: cfg.noise_sigma,
        objects,
    };
    scene.validate()?;
    Ok(scene)
}

fn disjoint(a: &BBox, b: &BBox) -> bool {
    a.x2 <= b.x1 || b.x2 <= a.x1 || a.y2 <= b.y1 || b.y2 <= a.y1
}
