//! Unsupervised temporal-coherence losses with exact gradients.
//!
//! Distances are plain (unsquared) Euclidean. At coincident points the
//! distance gradient is taken to be zero. A hinge whose argument is exactly
//! zero counts as inactive.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Margins for the Siamese (`delta`) and Quadruplet (`alpha`) losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub delta: f64,
    pub alpha: f64,
}

impl LossConfig {
    pub fn new(delta: f64, alpha: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite() && alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "margins must be positive and finite (delta = {delta}, alpha = {alpha})"
            )));
        }
        Ok(Self { delta, alpha })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            alpha: 0.5,
        }
    }
}

/// A loss value and its gradient with respect to each input embedding, in
/// argument order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

fn check_dims(vectors: &[&[f64]]) -> Result<usize> {
    let dim = vectors[0].len();
    for v in &vectors[1..] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.len(),
            });
        }
    }
    Ok(dim)
}

/// Euclidean distance between two embeddings.
pub fn euclid(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(&[a, b])?;
    Ok(distance(a, b))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `∂d/∂a` scaled by `coeff`, added into `ga`, and its negation into `gb`.
fn add_distance_grad(a: &[f64], b: &[f64], d: f64, coeff: f64, ga: &mut [f64], gb: &mut [f64]) {
    if d == 0.0 {
        return;
    }
    let s = coeff / d;
    for k in 0..a.len() {
        let g = s * (a[k] - b[k]);
        ga[k] += g;
        gb[k] -= g;
    }
}

/// Contrastive loss: `d` for neighbor pairs, `max(0, δ − d)` otherwise.
pub fn loss_siamese(x: &[f64], y: &[f64], positive: bool, cfg: &LossConfig) -> Result<LossResult> {
    let dim = check_dims(&[x, y])?;
    let d = distance(x, y);
    let mut gx = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    let value = if positive {
        add_distance_grad(x, y, d, 1.0, &mut gx, &mut gy);
        d
    } else {
        let slack = cfg.delta - d;
        if slack > 0.0 {
            add_distance_grad(x, y, d, -1.0, &mut gx, &mut gy);
            slack
        } else {
            0.0
        }
    };
    Ok(LossResult {
        value,
        grads: vec![gx, gy],
    })
}

/// Slow-feature contrastive baseline. Numerically identical to
/// [`loss_siamese`]; the baseline differs only in where its negatives come
/// from (same-video non-neighbors, see `sample_sfa_pairs`).
pub fn loss_sfa(x: &[f64], y: &[f64], positive: bool, cfg: &LossConfig) -> Result<LossResult> {
    loss_siamese(x, y, positive, cfg)
}

/// Quadruplet loss:
/// `d(t, t1) + max(0, d(t, tn) − d(t, neg) + α)`.
pub fn loss_quadruplet(
    anchor: &[f64],
    neighbor: &[f64],
    nonneighbor: &[f64],
    negative: &[f64],
    cfg: &LossConfig,
) -> Result<LossResult> {
    let dim = check_dims(&[anchor, neighbor, nonneighbor, negative])?;
    let mut g = vec![vec![0.0; dim]; 4];
    let (ga, rest) = g.split_first_mut().unwrap();
    let (g1, rest) = rest.split_first_mut().unwrap();
    let (gn, rest) = rest.split_first_mut().unwrap();
    let gneg = &mut rest[0];

    let d_near = distance(anchor, neighbor);
    add_distance_grad(anchor, neighbor, d_near, 1.0, ga, g1);

    let d_far = distance(anchor, nonneighbor);
    let d_neg = distance(anchor, negative);
    let hinge = d_far - d_neg + cfg.alpha;
    let hinge_value = if hinge > 0.0 {
        add_distance_grad(anchor, nonneighbor, d_far, 1.0, ga, gn);
        add_distance_grad(anchor, negative, d_neg, -1.0, ga, gneg);
        hinge
    } else {
        0.0
    };
    Ok(LossResult {
        value: d_near + hinge_value,
        grads: g,
    })
}

/// Mean of per-tuple values, summed in slice order.
pub fn mean_loss(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
