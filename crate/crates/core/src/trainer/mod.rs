//! Mini-batch SGD with weight decay over sampled tuples, and supervised
//! fine-tuning of a classifier head.
//!
//! Losses are always applied to the network's final layer; the embedding tap
//! only affects feature extraction. Per-batch work fans out over fixed-size
//! chunks of tuples whose gradients are summed in chunk order, so results do
//! not depend on the worker count.

mod config;
mod finetune;

use std::time::Instant;

use rayon::prelude::*;

pub use config::{lr_at, LrSchedule, Mode, StepDecay, TrainConfig};
pub use finetune::{few_shot_split, finetune_head, head_accuracy, FinetuneConfig, FinetuneReport, HeadParams, LabeledFrame};

use crate::encoder::{backward_into, forward, init_params, EncoderParams, EncoderSpec, GradientSet, Tap};
use crate::losses::{loss_quadruplet, loss_sfa, loss_siamese, LossConfig};
use crate::videoset::{sample_pairs, sample_quads, sample_sfa_pairs, FrameCorpus, FrameRef, PairSample, QuadSample};
use crate::{seeded_rng, Error, Result};

/// Mean epoch losses above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Tuples per unit of parallel work.
const CHUNK: usize = 4;

/// One plain SGD update with decoupled-from-bias weight decay:
/// `p ← p − lr · (g + λ p)` for weights and `p ← p − lr · g` for biases.
///
/// All gradients are checked before any parameter is touched.
pub fn sgd_step(params: &mut EncoderParams, grads: &GradientSet, lr: f64, lambda: f64) -> Result<()> {
    if !grads.is_congruent(params) {
        return Err(Error::InvalidArgument(
            "gradient set is not congruent with the parameters".into(),
        ));
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { block });
    }
    let shrink = 1.0 - lr * lambda;
    for (p, g) in params.blocks_mut().iter_mut().zip(&grads.blocks) {
        for (w, gw) in p.weights.iter_mut().zip(&g.weights) {
            *w = *w * shrink - lr * gw;
        }
        for (b, gb) in p.bias.iter_mut().zip(&g.bias) {
            *b -= lr * gb;
        }
    }
    Ok(())
}

/// Outcome of [`train_unsupervised`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean tuple loss of each epoch, measured before each batch's update.
    pub epoch_losses: Vec<f64>,
    pub params: EncoderParams,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy)]
enum Tuple {
    Pair(PairSample),
    Sfa(PairSample),
    Quad(QuadSample),
}

fn sample_epoch(corpus: &FrameCorpus, cfg: &TrainConfig, rng: &mut crate::Rng) -> Result<Vec<Tuple>> {
    let params = cfg.sampler_params();
    let count = cfg.tuples_per_epoch;
    Ok(match cfg.mode {
        Mode::Siamese => sample_pairs(corpus, &params, count, cfg.positive_fraction, rng)?
            .into_iter()
            .map(Tuple::Pair)
            .collect(),
        Mode::Sfa => sample_sfa_pairs(corpus, &params, count, cfg.positive_fraction, rng)?
            .into_iter()
            .map(Tuple::Sfa)
            .collect(),
        Mode::Quadruplet => sample_quads(corpus, &params, count, rng)?
            .into_iter()
            .map(Tuple::Quad)
            .collect(),
    })
}

/// Loss of one tuple; its parameter gradient is added to `grads`.
fn tuple_loss(
    params: &EncoderParams,
    corpus: &FrameCorpus,
    tuple: &Tuple,
    loss_cfg: &LossConfig,
    grads: &mut GradientSet,
) -> Result<f64> {
    let refs: Vec<FrameRef> = match tuple {
        Tuple::Pair(p) | Tuple::Sfa(p) => vec![p.anchor, p.other],
        Tuple::Quad(q) => vec![q.anchor, q.neighbor, q.nonneighbor, q.negative],
    };
    let passes = refs
        .iter()
        .map(|&r| forward(params, corpus.frame(r), Tap::Final))
        .collect::<Result<Vec<_>>>()?;
    let e: Vec<&[f64]> = passes.iter().map(|(emb, _)| &emb[..]).collect();
    let result = match tuple {
        Tuple::Pair(p) => loss_siamese(e[0], e[1], p.positive, loss_cfg)?,
        Tuple::Sfa(p) => loss_sfa(e[0], e[1], p.positive, loss_cfg)?,
        Tuple::Quad(_) => loss_quadruplet(e[0], e[1], e[2], e[3], loss_cfg)?,
    };
    for ((_, trace), g) in passes.iter().zip(&result.grads) {
        if g.iter().any(|&v| v != 0.0) {
            backward_into(params, trace, g, grads)?;
        }
    }
    Ok(result.value)
}

/// Mean loss of a batch and the gradient of that mean.
fn batch_gradient(
    params: &EncoderParams,
    corpus: &FrameCorpus,
    batch: &[Tuple],
    loss_cfg: &LossConfig,
) -> Result<(f64, GradientSet)> {
    let partials = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = GradientSet::zeros_like(params);
            let mut loss = 0.0;
            for tuple in chunk {
                loss += tuple_loss(params, corpus, tuple, loss_cfg, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = GradientSet::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.accumulate(g);
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss * scale, total))
}

/// Trains a freshly initialized encoder on unlabeled tuples.
///
/// The result is a pure function of the corpus frames, `spec` and `cfg`.
/// Corpus labels are never read.
pub fn train_unsupervised(corpus: &FrameCorpus, spec: &EncoderSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if spec.input() != corpus.frame_shape() {
        return Err(Error::InconsistentShape {
            expected: spec.input().to_string(),
            found: corpus.frame_shape().to_string(),
            context: "encoder input vs corpus frames".into(),
        });
    }
    let start = Instant::now();
    let mut params = init_params(spec, cfg.seed);
    let mut rng = seeded_rng(cfg.seed);
    rng.set_stream(1);
    let loss_cfg = cfg.loss_config();
    let schedule = cfg.schedule();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let tuples = sample_epoch(corpus, cfg, &mut rng)?;
        let lr = lr_at(&schedule, epoch);
        let mut sum = 0.0;
        for batch in tuples.chunks(cfg.batch_size()) {
            let (loss, grads) = batch_gradient(&params, corpus, batch, &loss_cfg)?;
            sum += loss * batch.len() as f64;
            sgd_step(&mut params, &grads, lr, cfg.lambda)?;
        }
        let mean = if tuples.is_empty() { 0.0 } else { sum / tuples.len() as f64 };
        log::info!("epoch {epoch}: lr {lr:.3e}, mean loss {mean:.6}");
        if !mean.is_finite() || mean > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }

    Ok(TrainReport {
        epoch_losses,
        params,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
