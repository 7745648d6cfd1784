//! Part-oriented domain-adversarial losses.
//!
//! Proposal features are mean-pooled from a per-point feature map, fed to a
//! domain classifier, and scored with softmax cross-entropy. The `QB` variant
//! reweights each proposal by a focal term `alpha * (1 - acc)^gamma` per
//! (domain, part class) pair, and the `QR`/`QRB` variants sum the per-layer
//! losses over three decoder resolutions.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::adversarial::classifier::{cross_entropy, cross_entropy_grad, ClassifierGrads, TinyClassifier};
use crate::error::{Error, Result};
use crate::types::{PartClass, Proposal};

/// Number of decoder layers the multi-resolution loss draws from.
pub const NUM_LAYERS: usize = 3;

/// Default proposal score threshold for the feature query.
pub const DEFAULT_S_THRE: f64 = 0.09;

/// Default multiplier of the adversarial term in the total loss.
pub const DEFAULT_ADV_LOSS_WEIGHT: f64 = 0.05;

/// Decay of the running per-pair accuracy.
pub const ACC_EMA_DECAY: f64 = 0.9;

/// Per-point features of one decoder layer; rows are points.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub features: DMatrix<f64>,
    pub layer: u8,
}

impl FeatureMap {
    pub fn new(features: DMatrix<f64>, layer: u8) -> Result<Self> {
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::input("feature map contains non-finite values"));
        }
        Ok(FeatureMap { features, layer })
    }

    pub fn num_points(&self) -> usize {
        self.features.nrows()
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }
}

/// Pooled proposal features and the proposals they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct QueriedFeatures {
    pub pooled: Vec<DVector<f64>>,
    /// Indices into the proposal list passed to the query.
    pub kept: Vec<usize>,
}

/// Mean-pools the features of every proposal scoring strictly above `s_thre`.
pub fn query_proposal_features(fm: &FeatureMap, proposals: &[Proposal], s_thre: f64) -> Result<QueriedFeatures> {
    let mut pooled = Vec::new();
    let mut kept = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        if !(p.score > s_thre) {
            continue;
        }
        p.validate(fm.num_points())?;
        if p.is_empty() {
            continue;
        }
        let mut acc = DVector::zeros(fm.channels());
        for &row in &p.point_indices {
            acc += fm.features.row(row).transpose();
        }
        pooled.push(acc / p.len() as f64);
        kept.push(i);
    }
    Ok(QueriedFeatures { pooled, kept })
}

/// Scatters pooled-feature gradients back onto the per-point feature map.
pub fn pool_backward(fm: &FeatureMap, proposals: &[Proposal], query: &QueriedFeatures, d_pooled: &[DVector<f64>]) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(fm.num_points(), fm.channels());
    for (&pi, g) in query.kept.iter().zip(d_pooled) {
        let p = &proposals[pi];
        let share = g.transpose() / p.len() as f64;
        for &row in &p.point_indices {
            let mut r = grad.row_mut(row);
            r += &share;
        }
    }
    grad
}

/// A scalar loss; `empty` is set when no proposal contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvLoss {
    pub value: f64,
    pub empty: bool,
}

/// Gradients of a weighted domain loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvGrad {
    pub loss: AdvLoss,
    pub classifier: ClassifierGrads,
    /// `dL/d pooled`, before gradient reversal.
    pub pooled: Vec<DVector<f64>>,
}

fn check_aligned(pooled: &[DVector<f64>], domains: &[usize], clf: &TinyClassifier) -> Result<()> {
    if pooled.len() != domains.len() {
        return Err(Error::input(format!(
            "{} pooled features but {} domain labels",
            pooled.len(),
            domains.len()
        )));
    }
    if let Some(&d) = domains.iter().find(|&&d| d >= clf.num_classes()) {
        return Err(Error::input(format!("domain label {d} out of range")));
    }
    if pooled.iter().any(|f| f.len() != clf.input_dim()) {
        return Err(Error::input("pooled feature width does not match classifier"));
    }
    Ok(())
}

/// `(1/M) Σ w_i CE(D(f_i), d_i)` and its gradients.
fn weighted_domain_loss(
    pooled: &[DVector<f64>],
    domains: &[usize],
    weights: &[f64],
    clf: &TinyClassifier,
    want_grads: bool,
) -> AdvGrad {
    let mut grads = clf.zero_grads();
    let mut d_pooled = Vec::new();
    if pooled.is_empty() {
        warn!("domain-adversarial loss evaluated on zero proposals");
        return AdvGrad {
            loss: AdvLoss { value: 0.0, empty: true },
            classifier: grads,
            pooled: d_pooled,
        };
    }
    let inv_m = 1.0 / pooled.len() as f64;
    let mut total = 0.0;
    for ((f, &d), &w) in pooled.iter().zip(domains).zip(weights) {
        let act = clf.forward(f);
        total += w * cross_entropy(&act.logits, d);
        if want_grads {
            let dl = cross_entropy_grad(&act.logits, d);
            d_pooled.push(clf.backward(f, &act, &dl, w * inv_m, &mut grads));
        }
    }
    AdvGrad {
        loss: AdvLoss {
            value: total * inv_m,
            empty: false,
        },
        classifier: grads,
        pooled: d_pooled,
    }
}

/// Part-oriented feature-query loss: mean domain cross-entropy.
pub fn loss_q_adv(pooled: &[DVector<f64>], domains: &[usize], clf: &TinyClassifier) -> Result<AdvLoss> {
    check_aligned(pooled, domains, clf)?;
    Ok(weighted_domain_loss(pooled, domains, &vec![1.0; pooled.len()], clf, false).loss)
}

/// Focal weighting state per (domain, part class) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalConfig {
    pub alpha: BTreeMap<(usize, PartClass), f64>,
    pub gamma: f64,
    pub acc: BTreeMap<(usize, PartClass), f64>,
}

impl FocalConfig {
    /// Same `alpha` for every pair, accuracies at zero.
    pub fn uniform(domains: usize, classes: &[PartClass], alpha: f64, gamma: f64) -> Self {
        let keys = (0..domains).flat_map(|d| classes.iter().map(move |&c| (d, c)));
        FocalConfig {
            alpha: keys.clone().map(|k| (k, alpha)).collect(),
            gamma,
            acc: keys.map(|k| (k, 0.0)).collect(),
        }
    }

    /// Alpha inversely proportional to each pair's frequency, normalised to
    /// mean 1 over the observed pairs.
    pub fn from_counts(counts: &BTreeMap<(usize, PartClass), usize>, gamma: f64) -> Self {
        let inv: BTreeMap<_, f64> = counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(&k, &n)| (k, 1.0 / n as f64))
            .collect();
        let mean = inv.values().sum::<f64>() / inv.len().max(1) as f64;
        FocalConfig {
            alpha: inv.iter().map(|(&k, &v)| (k, v / mean)).collect(),
            gamma,
            acc: inv.keys().map(|&k| (k, 0.0)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if self.alpha.values().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("alpha weights must be positive".into()));
        }
        if self.acc.values().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("accuracies must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Exponential moving average update of one pair's accuracy.
    pub fn update_acc(&mut self, domain: usize, class: PartClass, batch_acc: f64) {
        let a = self.acc.entry((domain, class)).or_insert(0.0);
        *a = ACC_EMA_DECAY * *a + (1.0 - ACC_EMA_DECAY) * batch_acc.clamp(0.0, 1.0);
    }
}

/// `alpha_d^p * (1 - acc_d^p)^gamma`, used as a positive weight.
pub fn focal_weight(cfg: &FocalConfig, domain: usize, class: PartClass) -> Result<f64> {
    let key = (domain, class);
    let (alpha, acc) = match (cfg.alpha.get(&key), cfg.acc.get(&key)) {
        (Some(a), Some(c)) => (*a, *c),
        _ => {
            return Err(Error::Config(format!(
                "no focal parameters for domain {domain}, class {class}"
            )))
        }
    };
    Ok(alpha * (1.0 - acc).powf(cfg.gamma))
}

fn focal_weights(domains: &[usize], parts: &[PartClass], cfg: &FocalConfig) -> Result<Vec<f64>> {
    if parts.len() != domains.len() {
        return Err(Error::input("part classes and domain labels differ in length"));
    }
    domains.iter().zip(parts).map(|(&d, &p)| focal_weight(cfg, d, p)).collect()
}

/// Distribution-balanced loss: focal-weighted mean domain cross-entropy.
pub fn loss_qb_adv(
    pooled: &[DVector<f64>],
    domains: &[usize],
    parts: &[PartClass],
    cfg: &FocalConfig,
    clf: &TinyClassifier,
) -> Result<AdvLoss> {
    check_aligned(pooled, domains, clf)?;
    let w = focal_weights(domains, parts, cfg)?;
    Ok(weighted_domain_loss(pooled, domains, &w, clf, false).loss)
}

/// [`loss_qb_adv`] with gradients for the classifier and the pooled features.
pub fn loss_qb_adv_grad(
    pooled: &[DVector<f64>],
    domains: &[usize],
    parts: &[PartClass],
    cfg: &FocalConfig,
    clf: &TinyClassifier,
) -> Result<AdvGrad> {
    check_aligned(pooled, domains, clf)?;
    let w = focal_weights(domains, parts, cfg)?;
    Ok(weighted_domain_loss(pooled, domains, &w, clf, true))
}

/// One decoder layer's pooled proposal features and its discriminator.
#[derive(Debug, Clone, Copy)]
pub struct LayerInput<'a> {
    pub pooled: &'a [DVector<f64>],
    pub classifier: &'a TinyClassifier,
}

/// Multi-resolution loss `Σ_l w_l L_Q(F^l)`.
pub fn loss_qr_adv(layers: &[LayerInput<'_>; NUM_LAYERS], weights: &[f64; NUM_LAYERS], domains: &[usize]) -> Result<f64> {
    layers.iter().zip(weights).try_fold(0.0, |acc, (l, &w)| {
        Ok(acc + w * loss_q_adv(l.pooled, domains, l.classifier)?.value)
    })
}

/// Multi-resolution, distribution-balanced loss `Σ_l w_l L_QB(F^l)`.
pub fn loss_qrb_adv(
    layers: &[LayerInput<'_>; NUM_LAYERS],
    weights: &[f64; NUM_LAYERS],
    domains: &[usize],
    parts: &[PartClass],
    cfg: &FocalConfig,
) -> Result<f64> {
    layers.iter().zip(weights).try_fold(0.0, |acc, (l, &w)| {
        Ok(acc + w * loss_qb_adv(l.pooled, domains, parts, cfg, l.classifier)?.value)
    })
}
