//! Distillation and alignment objectives with analytic gradients.
//!
//! All batch losses are mean-reduced over pairs and evaluated in f64 so
//! they can be checked against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A loss value and its gradient with respect to the first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<Vec<f64>>,
}

impl LossGrad {
    /// Sum of every gradient entry; a cheap fingerprint for reports.
    pub fn grad_checksum(&self) -> f64 {
        self.grad.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdKind {
    L2,
    L1,
    SmoothL1,
    Cosine,
}

impl std::str::FromStr for KdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "l1" => Ok(Self::L1),
            "smooth_l1" | "smoothl1" => Ok(Self::SmoothL1),
            "cosine" => Ok(Self::Cosine),
            _ => Err(Error::InvalidArgument(format!("unknown distillation loss '{s}'"))),
        }
    }
}

pub const SMOOTH_L1_BETA: f64 = 1.0;

fn check_pairs(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} features vs {} targets", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty feature batch".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != d) {
        return Err(Error::Shape("feature dimensions differ".into()));
    }
    if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss input".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared-L2 distillation: `(1/N) Σ ‖r − c‖²`.
pub fn kd_loss(roi: &[Vec<f64>], cached: &[Vec<f64>]) -> Result<LossGrad> {
    alt_kd_losses(roi, cached, KdKind::L2)
}

/// Per-pair distillation losses, mean-reduced. `cached` is held constant.
pub fn alt_kd_losses(roi: &[Vec<f64>], cached: &[Vec<f64>], kind: KdKind) -> Result<LossGrad> {
    check_pairs(roi, cached)?;
    let n = roi.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(roi.len());
    for (r, c) in roi.iter().zip(cached) {
        let (v, g) = match kind {
            KdKind::L2 => {
                let d: Vec<f64> = r.iter().zip(c).map(|(a, b)| a - b).collect();
                (dot(&d, &d), d.iter().map(|x| 2.0 * x).collect())
            }
            KdKind::L1 => r
                .iter()
                .zip(c)
                .map(|(a, b)| {
                    let d = a - b;
                    // Subgradient 0 at the kink.
                    let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                    (d.abs(), s)
                })
                .fold((0.0, Vec::new()), |(acc, mut g), (v, s)| {
                    g.push(s);
                    (acc + v, g)
                }),
            KdKind::SmoothL1 => r
                .iter()
                .zip(c)
                .map(|(a, b)| {
                    let d = a - b;
                    if d.abs() < SMOOTH_L1_BETA {
                        (0.5 * d * d / SMOOTH_L1_BETA, d / SMOOTH_L1_BETA)
                    } else {
                        (d.abs() - 0.5 * SMOOTH_L1_BETA, d.signum())
                    }
                })
                .fold((0.0, Vec::new()), |(acc, mut g), (v, s)| {
                    g.push(s);
                    (acc + v, g)
                }),
            KdKind::Cosine => {
                let (nr, nc) = (norm(r), norm(c));
                if nr == 0.0 || nc == 0.0 {
                    return Err(Error::ZeroNorm("cosine distillation input"));
                }
                let cos = dot(r, c) / (nr * nc);
                // d(1 - cos)/dr = -(c/‖c‖ - cos · r/‖r‖) / ‖r‖
                let g = r
                    .iter()
                    .zip(c)
                    .map(|(a, b)| -(b / nc - cos * a / nr) / nr)
                    .collect();
                (1.0 - cos, g)
            }
        };
        value += v;
        grad.push(g.into_iter().map(|x: f64| x / n).collect());
    }
    Ok(LossGrad { value: value / n, grad })
}

/// Cross-entropy of tempered softmax over cosine similarities between each
/// feature and every class embedding (background included as a class).
/// The gradient is with respect to the un-normalized features.
pub fn cons_loss(roi: &[Vec<f64>], classes: &[Vec<f64>], labels: &[usize], temperature: f64) -> Result<LossGrad> {
    if roi.len() != labels.len() {
        return Err(Error::Shape(format!("{} features vs {} labels", roi.len(), labels.len())));
    }
    if roi.is_empty() || classes.is_empty() {
        return Err(Error::InvalidArgument("empty features or classes".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
    }
    let d = classes[0].len();
    if roi.iter().chain(classes).any(|v| v.len() != d) {
        return Err(Error::Shape("feature dimensions differ".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes.len()) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {} classes", classes.len())));
    }
    let units = classes
        .iter()
        .map(|e| {
            let n = norm(e);
            if n == 0.0 {
                Err(Error::ZeroNorm("class embedding"))
            } else {
                Ok(e.iter().map(|x| x / n).collect::<Vec<f64>>())
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let n = roi.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(roi.len());
    for (r, &y) in roi.iter().zip(labels) {
        let nr = norm(r);
        if nr == 0.0 || !nr.is_finite() {
            return Err(Error::ZeroNorm("RoI feature"));
        }
        let u: Vec<f64> = r.iter().map(|x| x / nr).collect();
        let s: Vec<f64> = units.iter().map(|e| dot(&u, e)).collect();
        let zmax = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) / temperature;
        let z: f64 = s.iter().map(|&v| (v / temperature - zmax).exp()).sum();
        value += zmax + z.ln() - s[y] / temperature;

        let mut g = vec![0.0; d];
        for (k, e) in units.iter().enumerate() {
            let p = (s[k] / temperature - zmax).exp() / z;
            let coef = (p - if k == y { 1.0 } else { 0.0 }) / temperature;
            for ((gi, ei), ui) in g.iter_mut().zip(e).zip(&u) {
                *gi += coef * (ei - s[k] * ui) / nr;
            }
        }
        grad.push(g.into_iter().map(|x| x / n).collect());
    }
    Ok(LossGrad { value: value / n, grad })
}

/// Central-difference check of `grad` against `f` at `x`.
///
/// Returns the largest entry-wise gap divided by the larger of the two
/// gradients' max-abs entries (relative error in the infinity norm).
pub fn finite_difference_error<F>(f: F, x: &[Vec<f64>], grad: &[Vec<f64>], h: f64) -> f64
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    let mut probe = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut row = Vec::with_capacity(x[i].len());
        for j in 0..x[i].len() {
            let orig = probe[i][j];
            probe[i][j] = orig + h;
            let up = f(&probe);
            probe[i][j] = orig - h;
            let down = f(&probe);
            probe[i][j] = orig;
            row.push((up - down) / (2.0 * h));
        }
        numeric.push(row);
    }
    let max_abs = |g: &[Vec<f64>]| g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = max_abs(grad).max(max_abs(&numeric)).max(1e-12);
    grad.iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossComponents {
    pub l_reg_rpn: f64,
    pub l_cls_rpn: f64,
    pub l_reg_roi: f64,
    pub l_cons: f64,
    pub l_kd: f64,
    #[serde(default = "unit_weight")]
    pub weight_kd: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl LossComponents {
    pub fn new(l_reg_rpn: f64, l_cls_rpn: f64, l_reg_roi: f64, l_cons: f64, l_kd: f64) -> Self {
        Self {
            l_reg_rpn,
            l_cls_rpn,
            l_reg_roi,
            l_cons,
            l_kd,
            weight_kd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let terms = [
            ("l_reg_rpn", self.l_reg_rpn),
            ("l_cls_rpn", self.l_cls_rpn),
            ("l_reg_roi", self.l_reg_roi),
            ("l_cons", self.l_cons),
            ("l_kd", self.l_kd),
        ];
        for (name, v) in terms {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} is negative ({v})")));
            }
        }
        if !self.weight_kd.is_finite() {
            return Err(Error::NonFinite("weight_kd".into()));
        }
        Ok(())
    }
}

pub fn total_loss(c: &LossComponents) -> Result<f64> {
    c.validate()?;
    Ok(c.l_reg_rpn + c.l_cls_rpn + c.l_reg_roi + c.l_cons + c.weight_kd * c.l_kd)
}
