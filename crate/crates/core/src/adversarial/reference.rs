//! Reference formulas for the segmentation losses the adversarial term is
//! added to. They are not trained here.

use nalgebra::{DVector, Vector3};

use crate::adversarial::classifier::cross_entropy;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy of per-point semantic logits.
pub fn semantic_loss(logits: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::input("semantic loss needs aligned, non-empty inputs"));
    }
    if logits.iter().zip(labels).any(|(l, &y)| y >= l.len()) {
        return Err(Error::input("semantic label out of range"));
    }
    Ok(logits.iter().zip(labels).map(|(l, &y)| cross_entropy(l, y)).sum::<f64>() / labels.len() as f64)
}

/// Mean L1 distance between predicted offsets and `centroid - point` over
/// foreground points.
pub fn offset_loss(offsets: &[Vector3<f64>], targets: &[Vector3<f64>]) -> Result<f64> {
    if offsets.len() != targets.len() || offsets.is_empty() {
        return Err(Error::input("offset loss needs aligned, non-empty inputs"));
    }
    let sum: f64 = offsets.iter().zip(targets).map(|(o, t)| (o - t).abs().sum()).sum();
    Ok(sum / offsets.len() as f64)
}

/// Binary cross-entropy of proposal scores against their IoU with the best
/// matching ground-truth instance.
pub fn score_loss(scores: &[f64], ious: &[f64]) -> Result<f64> {
    if scores.len() != ious.len() || scores.is_empty() {
        return Err(Error::input("score loss needs aligned, non-empty inputs"));
    }
    let eps = 1e-12;
    let sum: f64 = scores
        .iter()
        .zip(ious)
        .map(|(&s, &y)| {
            let s = s.clamp(eps, 1.0 - eps);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum();
    Ok(sum / scores.len() as f64)
}
