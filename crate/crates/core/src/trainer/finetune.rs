//! Supervised fine-tuning of a softmax classifier head on top of an encoder.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sgd_step;
use crate::encoder::{backward_into, embed, forward, EncoderParams, GradientSet, Tap};
use crate::videoset::{Frame, FrameCorpus};
use crate::{seeded_rng, Error, Result};

/// A frame with its class index.
pub type LabeledFrame<'a> = (&'a Frame, usize);

/// A dense layer `logits = W e + b` with `W` stored `[class][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadParams {
    /// The untrained head. Every class scores zero, so prediction falls back
    /// to class 0.
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; dim * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, e: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + row.iter().zip(e).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict(&self, e: &[f64]) -> usize {
        let z = self.logits(e);
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Weight decay on encoder and head weights.
    pub lambda: f64,
    pub batch: usize,
    pub freeze_encoder: bool,
    pub tap: Tap,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.05,
            lambda: 5e-4,
            batch: 5,
            freeze_encoder: false,
            tap: Tap::Penultimate,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneReport {
    pub head: HeadParams,
    /// The encoder after fine-tuning (unchanged when frozen).
    pub encoder: EncoderParams,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Fraction of `set` whose predicted class matches its label.
pub fn head_accuracy(encoder: &EncoderParams, head: &HeadParams, set: &[LabeledFrame], tap: Tap) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &(frame, label) in set {
        if head.predict(&embed(encoder, frame, tap)?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

fn softmax_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(c, e)| e / sum - f64::from(u8::from(c == label)))
        .collect();
    (loss, grad)
}

/// Trains a zero-initialized softmax head (and, unless frozen, the encoder)
/// with mini-batch softmax cross-entropy, then scores train and test sets.
pub fn finetune_head(
    encoder: &EncoderParams,
    classes: usize,
    train: &[LabeledFrame],
    test: &[LabeledFrame],
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) || !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument(
            "fine-tuning needs batch ≥ 1, lr > 0 and lambda ≥ 0".into(),
        ));
    }
    if let Some(&(_, label)) = train.iter().chain(test).find(|(_, l)| *l >= classes) {
        return Err(Error::InvalidArgument(format!("label {label} is outside 0..{classes}")));
    }
    for c in 0..classes {
        if !train.iter().any(|&(_, l)| l == c) {
            return Err(Error::MissingLabels(format!("class {c} has no training example")));
        }
    }

    let dim = encoder.spec().tap_dim(cfg.tap)?;
    let mut head = HeadParams::zeros(dim, classes);
    let mut encoder = encoder.clone();
    let mut rng = seeded_rng(cfg.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let frozen: Option<Vec<Vec<f64>>> = if cfg.freeze_encoder {
        Some(
            train
                .iter()
                .map(|&(f, _)| embed(&encoder, f, cfg.tap).map(|e| e.0))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut gw = vec![0.0; head.weights.len()];
            let mut gb = vec![0.0; classes];
            let mut genc = (!cfg.freeze_encoder).then(|| GradientSet::zeros_like(&encoder));
            for &i in batch {
                let (frame, label) = train[i];
                let (e, trace) = match &frozen {
                    Some(cache) => (cache[i].clone(), None),
                    None => {
                        let (e, trace) = forward(&encoder, frame, cfg.tap)?;
                        (e.0, Some(trace))
                    }
                };
                let (loss, dz) = softmax_grad(&head.logits(&e), label);
                loss_sum += loss;
                let mut de = vec![0.0; dim];
                for c in 0..classes {
                    gb[c] += dz[c];
                    let row = c * dim;
                    for k in 0..dim {
                        gw[row + k] += dz[c] * e[k];
                        de[k] += dz[c] * head.weights[row + k];
                    }
                }
                if let (Some(g), Some(trace)) = (genc.as_mut(), trace) {
                    backward_into(&encoder, &trace, &de, g)?;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let shrink = 1.0 - cfg.lr * cfg.lambda;
            for (w, g) in head.weights.iter_mut().zip(&gw) {
                *w = *w * shrink - cfg.lr * g * scale;
            }
            for (b, g) in head.bias.iter_mut().zip(&gb) {
                *b -= cfg.lr * g * scale;
            }
            if let Some(mut g) = genc {
                g.scale(scale);
                sgd_step(&mut encoder, &g, cfg.lr, cfg.lambda)?;
            }
        }
        log::debug!("finetune epoch {epoch}: mean loss {:.6}", loss_sum / train.len().max(1) as f64);
    }

    Ok(FinetuneReport {
        train_accuracy: head_accuracy(&encoder, &head, train, cfg.tap)?,
        test_accuracy: head_accuracy(&encoder, &head, test, cfg.tap)?,
        head,
        encoder,
    })
}

/// Draws `per_class` training frames per class (uniformly, by seed) from a
/// labeled corpus; every other frame goes to the test set. Both sets keep
/// corpus order.
pub fn few_shot_split(
    corpus: &FrameCorpus,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<LabeledFrame<'_>>, Vec<LabeledFrame<'_>>)> {
    let table = corpus
        .labels()
        .ok_or_else(|| Error::MissingLabels("fine-tuning needs a labeled corpus".into()))?;
    let refs = corpus.frame_refs();
    let mut order: Vec<usize> = (0..refs.len()).collect();
    let mut rng = seeded_rng(seed);
    rng.set_stream(4);
    order.shuffle(&mut rng);
    let mut taken = vec![0usize; table.num_classes()];
    let mut in_train = vec![false; refs.len()];
    for i in order {
        let c = table.label(refs[i]);
        if taken[c] < per_class {
            taken[c] += 1;
            in_train[i] = true;
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < per_class) {
        return Err(Error::MissingLabels(format!(
            "class {} has only {} frame(s), fewer than {per_class} requested",
            table.class_names()[c],
            taken[c]
        )));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &r) in refs.iter().enumerate() {
        let item = (corpus.frame(r), table.label(r));
        if in_train[i] {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}
