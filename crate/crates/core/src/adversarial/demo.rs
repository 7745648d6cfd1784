//! Desk-scale domain-adversarial training on synthetic proposals.
//!
//! Each synthetic proposal is a handful of points whose raw features carry a
//! part-class signal, a domain signal and noise on disjoint coordinates. A
//! three-layer tanh extractor produces one feature map per layer, a linear
//! head classifies the part class from the pooled last layer, and one
//! discriminator per layer is trained through gradient reversal with the
//! multi-resolution focal loss. After training, a logistic-regression probe
//! on frozen pooled features measures how much domain information is left.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adversarial::classifier::{cross_entropy, cross_entropy_grad, TinyClassifier};
use crate::adversarial::loss::{
    loss_qb_adv_grad, pool_backward, query_proposal_features, FeatureMap, FocalConfig, QueriedFeatures, DEFAULT_S_THRE,
    NUM_LAYERS,
};
use crate::error::{Error, Result};
use crate::types::{PartClass, Proposal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub domains: usize,
    pub classes: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Smallest number of proposals per (domain, class) pair; pairs get up to
    /// half as many again so the focal weights see an imbalance.
    pub proposals_per_pair: usize,
    pub points_per_proposal: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Multiplier of the adversarial term relative to the task loss.
    pub adv_weight: f64,
    pub layer_weights: [f64; NUM_LAYERS],
    pub s_thre: f64,
    pub noise: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            domains: 3,
            classes: 3,
            lambda: 0.3,
            gamma: 2.0,
            epochs: 200,
            seed: 0,
            proposals_per_pair: 20,
            points_per_proposal: 4,
            hidden: 16,
            learning_rate: 0.3,
            adv_weight: 10.0,
            layer_weights: [1.0 / 3.0; NUM_LAYERS],
            s_thre: DEFAULT_S_THRE,
            noise: 0.25,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains < 2 {
            return Err(Error::input("the demo needs at least two domains"));
        }
        if self.classes < 2 || self.classes > PartClass::ALL.len() {
            return Err(Error::input(format!(
                "the demo needs between 2 and {} part classes",
                PartClass::ALL.len()
            )));
        }
        if self.proposals_per_pair == 0 || self.points_per_proposal == 0 || self.hidden == 0 {
            return Err(Error::input("proposal, point and hidden counts must be positive"));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda)
            || !finite_nonneg(self.gamma)
            || !finite_nonneg(self.adv_weight)
            || !finite_nonneg(self.noise)
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || !self.layer_weights.iter().all(|&w| finite_nonneg(w))
            || !self.s_thre.is_finite()
        {
            return Err(Error::Config("demo hyperparameters must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Multi-resolution focal adversarial loss.
    pub loss_qrb: f64,
    /// Last-layer discriminator accuracy on queried training proposals.
    pub domain_acc: f64,
    pub task_loss: f64,
    pub task_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    /// Entry 0 is the initialisation; entry `e` follows `e` updates.
    pub epochs: Vec<EpochStats>,
    /// Linear-probe domain accuracy on held-out proposals.
    pub probe_domain_acc: f64,
    /// Part-class accuracy of the task head on held-out proposals.
    pub task_acc: f64,
    pub chance_domain_acc: f64,
}

struct Dataset {
    /// Raw per-point features, one row per point.
    x: DMatrix<f64>,
    proposals: Vec<Proposal>,
    class_idx: Vec<usize>,
    domains: Vec<usize>,
}

fn generate(cfg: &DemoConfig, rng: &mut ChaCha8Rng) -> Dataset {
    let dim = cfg.classes + cfg.domains + 2;
    let noise = Normal::new(0.0, cfg.noise).expect("finite noise");
    let mut rows: Vec<f64> = Vec::new();
    let mut proposals = Vec::new();
    let mut class_idx = Vec::new();
    let mut domains = Vec::new();
    let mut n_points = 0;
    for d in 0..cfg.domains {
        for c in 0..cfg.classes {
            let count = cfg.proposals_per_pair + rng.random_range(0..=cfg.proposals_per_pair / 2);
            for _ in 0..count {
                let start = n_points;
                for _ in 0..cfg.points_per_proposal {
                    for k in 0..dim {
                        let signal = if k == c || k == cfg.classes + d { 1.0 } else { 0.0 };
                        rows.push(signal + noise.sample(rng));
                    }
                    n_points += 1;
                }
                let mut p = Proposal::new((start..n_points).collect(), PartClass::ALL[c], rng.random::<f64>());
                p.domain_label = Some(d);
                proposals.push(p);
                class_idx.push(c);
                domains.push(d);
            }
        }
    }
    Dataset {
        x: DMatrix::from_row_slice(n_points, dim, &rows),
        proposals,
        class_idx,
        domains,
    }
}

fn init_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, (1.0 / cols as f64).sqrt()).expect("positive std");
    DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// Stack of `tanh(W h + b)` layers applied row-wise.
struct Extractor {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl Extractor {
    fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = (0..NUM_LAYERS)
            .map(|l| init_matrix(hidden, if l == 0 { input } else { hidden }, rng))
            .collect();
        Extractor {
            w,
            b: vec![DVector::zeros(hidden); NUM_LAYERS],
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(NUM_LAYERS);
        for l in 0..NUM_LAYERS {
            let input = if l == 0 { x } else { &out[l - 1] };
            let mut a = input * self.w[l].transpose();
            for mut row in a.row_iter_mut() {
                row += self.b[l].transpose();
            }
            out.push(a.map(f64::tanh));
        }
        out
    }

    /// Gradient step from per-layer output gradients `d_out`.
    fn step(&mut self, x: &DMatrix<f64>, h: &[DMatrix<f64>], mut d_out: Vec<DMatrix<f64>>, lr: f64) {
        for l in (0..NUM_LAYERS).rev() {
            let da = d_out[l].component_mul(&h[l].map(|v| 1.0 - v * v));
            let input = if l == 0 { x } else { &h[l - 1] };
            let gw = da.tr_mul(input);
            let gb = DVector::from_iterator(da.ncols(), da.column_iter().map(|c| c.sum()));
            if l > 0 {
                let back = &da * &self.w[l];
                d_out[l - 1] += back;
            }
            self.w[l] -= gw * lr;
            self.b[l] -= gb * lr;
        }
    }
}

/// Softmax regression `W f + b` over feature rows.
struct LinearHead {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// One row per vector.
fn stack(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

impl LinearHead {
    fn zeros(input: usize, classes: usize) -> Self {
        LinearHead {
            w: DMatrix::zeros(classes, input),
            b: DVector::zeros(classes),
        }
    }

    fn logits(&self, feats: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = feats * self.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z
    }

    /// Mean cross-entropy, accuracy, and gradients w.r.t. the input rows;
    /// applies one descent step to the head when `lr > 0`.
    fn train_step(&mut self, feats: &DMatrix<f64>, labels: &[usize], lr: f64) -> (f64, f64, DMatrix<f64>) {
        let inv = 1.0 / feats.nrows() as f64;
        let mut dz = self.logits(feats);
        let (mut loss, mut hits) = (0.0, 0usize);
        for (i, &y) in labels.iter().enumerate() {
            let z = dz.row(i).transpose();
            loss += cross_entropy(&z, y);
            hits += usize::from(z.argmax().0 == y);
            dz.set_row(i, &(cross_entropy_grad(&z, y) * inv).transpose());
        }
        let d_in = &dz * &self.w;
        if lr > 0.0 {
            self.w -= dz.tr_mul(feats) * lr;
            self.b -= DVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum())) * lr;
        }
        (loss * inv, hits as f64 * inv, d_in)
    }

    fn accuracy(&self, feats: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let z = self.logits(feats);
        let hits = labels.iter().enumerate().filter(|(i, &y)| z.row(*i).transpose().argmax().0 == y).count();
        hits as f64 / labels.len() as f64
    }
}

fn pooled_all(h: &DMatrix<f64>, proposals: &[Proposal], layer: u8) -> Result<(FeatureMap, QueriedFeatures)> {
    let fm = FeatureMap::new(h.clone(), layer)?;
    let q = query_proposal_features(&fm, proposals, f64::NEG_INFINITY)?;
    Ok((fm, q))
}

/// Logistic-regression probe on z-scored features; returns test accuracy.
fn linear_probe(train: &DMatrix<f64>, train_y: &[usize], test: &DMatrix<f64>, test_y: &[usize], classes: usize) -> f64 {
    let n = train.nrows() as f64;
    let mean = train.row_sum() / n;
    let mut std = train.row_variance();
    std.apply(|v| *v = v.sqrt().max(1e-12));
    let z = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for mut row in out.row_iter_mut() {
            row -= &mean;
            row.component_div_assign(&std);
        }
        out
    };
    let (zt, ze) = (z(train), z(test));
    let mut head = LinearHead::zeros(train.ncols(), classes);
    for _ in 0..PROBE_STEPS {
        head.train_step(&zt, train_y, PROBE_LR);
    }
    head.accuracy(&ze, test_y)
}

const PROBE_STEPS: usize = 500;
const PROBE_LR: f64 = 0.5;

pub fn adv_demo_train(cfg: &DemoConfig) -> Result<DemoReport> {
    cfg.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = generate(cfg, &mut data_rng);
    let test = generate(cfg, &mut data_rng);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(1);

    let input = train.x.ncols();
    let mut extractor = Extractor::new(input, cfg.hidden, &mut init_rng);
    let mut discriminators: Vec<TinyClassifier> = (0..NUM_LAYERS)
        .map(|_| {
            let mut c = TinyClassifier::new(cfg.hidden, cfg.hidden, cfg.domains, &mut init_rng);
            c.grl = cfg.lambda;
            c
        })
        .collect();
    let mut head = LinearHead::zeros(cfg.hidden, cfg.classes);

    let mut counts = BTreeMap::new();
    for (&d, &c) in train.domains.iter().zip(&train.class_idx) {
        *counts.entry((d, PartClass::ALL[c])).or_insert(0usize) += 1;
    }
    let mut focal = FocalConfig::from_counts(&counts, cfg.gamma);
    let parts: Vec<PartClass> = train.class_idx.iter().map(|&c| PartClass::ALL[c]).collect();

    let mut epochs = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let h = extractor.forward(&train.x);
        let mut d_out: Vec<DMatrix<f64>> = Vec::with_capacity(NUM_LAYERS);
        let mut loss_qrb = 0.0;
        let mut last_preds: Vec<(usize, usize, bool)> = Vec::new();
        let mut disc_grads = Vec::with_capacity(NUM_LAYERS);
        for l in 0..NUM_LAYERS {
            let fm = FeatureMap::new(h[l].clone(), l as u8 + 1)?;
            let q = query_proposal_features(&fm, &train.proposals, cfg.s_thre)?;
            let doms: Vec<usize> = q.kept.iter().map(|&i| train.domains[i]).collect();
            let prt: Vec<PartClass> = q.kept.iter().map(|&i| parts[i]).collect();
            let g = loss_qb_adv_grad(&q.pooled, &doms, &prt, &focal, &discriminators[l])?;
            loss_qrb += cfg.layer_weights[l] * g.loss.value;
            if l == NUM_LAYERS - 1 {
                last_preds = q
                    .pooled
                    .iter()
                    .zip(&q.kept)
                    .map(|(f, &i)| (train.domains[i], train.class_idx[i], discriminators[l].predict(f) == train.domains[i]))
                    .collect();
            }
            // reversed and scaled gradient for the extractor
            let scale = -discriminators[l].grl * cfg.adv_weight * cfg.layer_weights[l];
            let rev: Vec<DVector<f64>> = g.pooled.iter().map(|v| v * scale).collect();
            d_out.push(pool_backward(&fm, &train.proposals, &q, &rev));
            disc_grads.push(g.classifier);
        }

        let (fm3, q3) = pooled_all(&h[NUM_LAYERS - 1], &train.proposals, NUM_LAYERS as u8)?;
        let lr = if epoch < cfg.epochs { cfg.learning_rate } else { 0.0 };
        let (task_loss, task_acc, d_task) = head.train_step(&stack(&q3.pooled), &train.class_idx, lr);
        let d_task: Vec<DVector<f64>> = d_task.row_iter().map(|r| r.transpose()).collect();
        let domain_acc = if last_preds.is_empty() {
            0.0
        } else {
            last_preds.iter().filter(|p| p.2).count() as f64 / last_preds.len() as f64
        };
        epochs.push(EpochStats {
            epoch,
            loss_qrb,
            domain_acc,
            task_loss,
            task_acc,
        });
        if epoch == cfg.epochs {
            break;
        }

        let mut pair_hits: BTreeMap<(usize, PartClass), (usize, usize)> = BTreeMap::new();
        for &(d, c, ok) in &last_preds {
            let e = pair_hits.entry((d, PartClass::ALL[c])).or_default();
            e.0 += usize::from(ok);
            e.1 += 1;
        }
        for ((d, c), (hits, n)) in pair_hits {
            focal.update_acc(d, c, hits as f64 / n as f64);
        }

        d_out[NUM_LAYERS - 1] += pool_backward(&fm3, &train.proposals, &q3, &d_task);
        extractor.step(&train.x, &h, d_out, cfg.learning_rate);
        for (clf, g) in discriminators.iter_mut().zip(&disc_grads) {
            clf.apply_grads(g, cfg.learning_rate * cfg.adv_weight);
        }
    }

    let h_train = extractor.forward(&train.x);
    let h_test = extractor.forward(&test.x);
    let (_, ptr) = pooled_all(&h_train[NUM_LAYERS - 1], &train.proposals, NUM_LAYERS as u8)?;
    let (_, pte) = pooled_all(&h_test[NUM_LAYERS - 1], &test.proposals, NUM_LAYERS as u8)?;
    let (ptr, pte) = (stack(&ptr.pooled), stack(&pte.pooled));
    let probe_domain_acc = linear_probe(&ptr, &train.domains, &pte, &test.domains, cfg.domains);
    let task_acc = head.accuracy(&pte, &test.class_idx);

    Ok(DemoReport {
        config: cfg.clone(),
        epochs,
        probe_domain_acc,
        task_acc,
        chance_domain_acc: 1.0 / cfg.domains as f64,
    })
}
