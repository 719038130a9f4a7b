//! Central finite-difference oracle for encoder and loss gradients.
//!
//! Shared by the core integration tests and the acceptance target.

#![allow(dead_code)]

use cohere::encoder::{backward, embed, forward, init_params, EncoderParams, EncoderSpec, Tap};
use cohere::losses::{euclid, loss_quadruplet, loss_siamese, loss_sfa, LossConfig, LossResult};
use cohere::seeded_rng;
use cohere::videoset::Frame;
use rand::Rng;

/// Small networks that together exercise every layer kind and both paddings.
pub const ARCHS: &[&str] = &[
    "1x3x3 dense4",
    "2x2x2 dense3 relu dense2",
    "1x5x5 conv2k3p0 relu dense3",
    "1x4x4 conv2k3p1 relu pool2 dense3 relu dense2",
    "2x6x6 conv3k3p1 relu pool2 conv2k2p0 relu dense4 relu dense3",
    "3x4x4 pool2 dense3 relu dense2",
];

pub const KINK_MARGIN: f64 = 1e-3;
pub const ENCODER_H: f64 = 1e-4;
pub const LOSS_H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error with a floor so that gradients that are zero on both
/// sides compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub struct EncoderInstance {
    pub params: EncoderParams,
    pub frame: Frame,
    pub tap: Tap,
    /// Upstream gradient at the embedding.
    pub upstream: Vec<f64>,
}

/// A random instance of `arch`, or `None` if it lands within the kink margin.
pub fn encoder_instance(arch: &str, tap: Tap, seed: u64) -> Option<EncoderInstance> {
    let spec: EncoderSpec = arch.parse().unwrap();
    spec.tap_end(tap).ok()?;
    let mut rng = seeded_rng(seed);
    let mut params = init_params(&spec, rng.random());
    for block in params.blocks_mut() {
        for b in &mut block.bias {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let shape = spec.input();
    let frame = Frame::new(shape, (0..shape.len()).map(|_| rng.random::<f32>()).collect()).unwrap();
    let (e, trace) = forward(&params, &frame, tap).unwrap();
    if trace.kink_margin(&spec) < KINK_MARGIN {
        return None;
    }
    let upstream = (0..e.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Some(EncoderInstance {
        params,
        frame,
        tap,
        upstream,
    })
}

fn probe(inst: &EncoderInstance, params: &EncoderParams) -> f64 {
    let e = embed(params, &inst.frame, inst.tap).unwrap();
    e.iter().zip(&inst.upstream).map(|(a, b)| a * b).sum()
}

/// Largest relative error between `backward` and central differences of
/// `⟨embed(params), upstream⟩` over every parameter.
pub fn encoder_max_rel_err(inst: &EncoderInstance) -> f64 {
    let (_, trace) = forward(&inst.params, &inst.frame, inst.tap).unwrap();
    let grads = backward(&inst.params, &trace, &inst.upstream).unwrap();
    let mut worst: f64 = 0.0;
    let mut p = inst.params.clone();
    for (bi, block) in inst.params.blocks().iter().enumerate() {
        for (is_bias, values) in [(false, &block.weights), (true, &block.bias)] {
            for i in 0..values.len() {
                let orig = values[i];
                let mut eval_at = |v: f64| {
                    let b = &mut p.blocks_mut()[bi];
                    if is_bias {
                        b.bias[i] = v;
                    } else {
                        b.weights[i] = v;
                    }
                    probe(inst, &p)
                };
                let numeric = (eval_at(orig + ENCODER_H) - eval_at(orig - ENCODER_H)) / (2.0 * ENCODER_H);
                eval_at(orig);
                let analytic = if is_bias {
                    grads.blocks[bi].bias[i]
                } else {
                    grads.blocks[bi].weights[i]
                };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Siamese { positive: bool },
    Sfa { positive: bool },
    Quadruplet,
}

pub fn eval_loss(kind: LossKind, e: &[Vec<f64>], cfg: &LossConfig) -> LossResult {
    match kind {
        LossKind::Siamese { positive } => loss_siamese(&e[0], &e[1], positive, cfg).unwrap(),
        LossKind::Sfa { positive } => loss_sfa(&e[0], &e[1], positive, cfg).unwrap(),
        LossKind::Quadruplet => loss_quadruplet(&e[0], &e[1], &e[2], &e[3], cfg).unwrap(),
    }
}

/// Distance of the inputs from every non-differentiable point of the loss.
pub fn loss_kink_distance(kind: LossKind, e: &[Vec<f64>], cfg: &LossConfig) -> f64 {
    let d = |a: usize, b: usize| euclid(&e[a], &e[b]).unwrap();
    match kind {
        LossKind::Siamese { positive } | LossKind::Sfa { positive } => {
            if positive {
                d(0, 1)
            } else {
                d(0, 1).min((cfg.delta - d(0, 1)).abs())
            }
        }
        LossKind::Quadruplet => d(0, 1)
            .min(d(0, 2))
            .min(d(0, 3))
            .min((d(0, 2) - d(0, 3) + cfg.alpha).abs()),
    }
}

/// Random embeddings for `kind`, or `None` when within the kink margin.
pub fn loss_instance(kind: LossKind, dim: usize, cfg: &LossConfig, seed: u64) -> Option<Vec<Vec<f64>>> {
    let mut rng = seeded_rng(seed);
    let count = if kind == LossKind::Quadruplet { 4 } else { 2 };
    let e: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-0.6..0.6)).collect())
        .collect();
    (loss_kink_distance(kind, &e, cfg) >= KINK_MARGIN).then_some(e)
}

/// Largest relative error between the loss gradient and central differences.
pub fn loss_max_rel_err(kind: LossKind, e: &[Vec<f64>], cfg: &LossConfig) -> f64 {
    let analytic = eval_loss(kind, e, cfg).grads;
    let mut worst: f64 = 0.0;
    let mut x = e.to_vec();
    for v in 0..e.len() {
        for k in 0..e[v].len() {
            let orig = e[v][k];
            x[v][k] = orig + LOSS_H;
            let plus = eval_loss(kind, &x, cfg).value;
            x[v][k] = orig - LOSS_H;
            let minus = eval_loss(kind, &x, cfg).value;
            x[v][k] = orig;
            worst = worst.max(rel_err(analytic[v][k], (plus - minus) / (2.0 * LOSS_H)));
        }
    }
    worst
}

pub const LOSS_KINDS: &[LossKind] = &[
    LossKind::Siamese { positive: true },
    LossKind::Siamese { positive: false },
    LossKind::Sfa { positive: true },
    LossKind::Sfa { positive: false },
    LossKind::Quadruplet,
];

/// Outcome of the randomized gradient suite.
#[derive(Debug, Default)]
pub struct SuiteResult {
    pub encoder_instances: usize,
    pub loss_instances: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

/// Runs `per_case` random instances of every architecture/tap pair and every
/// loss kind.
pub fn run_suite(per_case: usize) -> SuiteResult {
    let mut out = SuiteResult::default();
    for (a, arch) in ARCHS.iter().enumerate() {
        for tap in [Tap::Final, Tap::Penultimate] {
            let mut found = 0;
            let mut seed = 1000 * a as u64 + if tap == Tap::Final { 0 } else { 500 };
            let mut attempts = 0;
            while found < per_case && attempts < 50 * per_case {
                attempts += 1;
                seed += 1;
                let Some(inst) = encoder_instance(arch, tap, seed) else {
                    continue;
                };
                found += 1;
                let err = encoder_max_rel_err(&inst);
                out.worst = out.worst.max(err);
                if err >= TOLERANCE {
                    out.failures.push(format!("{arch} ({tap}) seed {seed}: rel err {err:.3e}"));
                }
            }
            out.encoder_instances += found;
        }
    }
    let cfg = LossConfig::new(1.0, 0.5).unwrap();
    for (k, &kind) in LOSS_KINDS.iter().enumerate() {
        let mut found = 0;
        let mut seed = 90_000 + 1000 * k as u64;
        while found < per_case {
            seed += 1;
            let Some(e) = loss_instance(kind, 5, &cfg, seed) else {
                continue;
            };
            found += 1;
            let err = loss_max_rel_err(kind, &e, &cfg);
            out.worst = out.worst.max(err);
            if err >= TOLERANCE {
                out.failures.push(format!("{kind:?} seed {seed}: rel err {err:.3e}"));
            }
        }
        out.loss_instances += found;
    }
    out
}
