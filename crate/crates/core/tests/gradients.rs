mod support;

use cohere::encoder::{backward, forward, init_params, EncoderSpec, Tap};
use cohere::losses::{loss_quadruplet, LossConfig};
use cohere::seeded_rng;
use cohere::videoset::{Frame, FrameShape};
use rand::Rng;
use support::gradcheck::*;

#[test]
fn every_layer_kind_matches_finite_differences() {
    let r = run_suite(5);
    assert!(r.encoder_instances + r.loss_instances >= 50, "{r:?}");
    assert!(r.failures.is_empty(), "{:#?}", r.failures);
}

#[test]
fn suite_covers_all_layer_kinds() {
    let kinds: std::collections::BTreeSet<String> = ARCHS
        .iter()
        .flat_map(|a| a.split_whitespace().skip(1))
        .map(|tok| tok.trim_end_matches(|c: char| c.is_ascii_digit() || c == 'k' || c == 'p').to_string())
        .map(|t| t.chars().take_while(|c| c.is_ascii_alphabetic()).collect())
        .collect();
    for k in ["conv", "relu", "pool", "dense"] {
        assert!(kinds.iter().any(|t| t.starts_with(k)), "{k} missing from {kinds:?}");
    }
}

#[test]
fn hinge_deadzone_matches_finite_differences() {
    // A quadruplet far inside the deadzone: the hinge contributes nothing,
    // and the numerical derivative with respect to nonneighbor/negative is 0.
    let cfg = LossConfig::new(1.0, 0.5).unwrap();
    let e = vec![
        vec![0.0, 0.0],
        vec![0.1, 0.05],
        vec![0.2, -0.1],
        vec![3.0, 2.0],
    ];
    assert!(loss_kink_distance(LossKind::Quadruplet, &e, &cfg) > 0.1);
    assert!(loss_max_rel_err(LossKind::Quadruplet, &e, &cfg) < TOLERANCE);
    let r = eval_loss(LossKind::Quadruplet, &e, &cfg);
    assert!(r.grads[2].iter().chain(&r.grads[3]).all(|&g| g == 0.0));
}

/// Chains loss gradients through four encoder passes sharing one parameter
/// set, as the trainer does, and checks the total against finite differences
/// of the loss as a function of the parameters.
#[test]
fn quadruplet_loss_through_shared_encoder() {
    let spec: EncoderSpec = "1x4x4 conv2k3p1 relu pool2 dense4 relu dense3".parse().unwrap();
    let cfg = LossConfig::new(1.0, 0.5).unwrap();
    let shape = FrameShape::new(1, 4, 4);
    let mut checked = 0;
    for seed in 0..40u64 {
        let mut rng = seeded_rng(seed);
        let params = init_params(&spec, seed);
        let frames: Vec<Frame> = (0..4)
            .map(|_| Frame::new(shape, (0..16).map(|_| rng.random::<f32>()).collect()).unwrap())
            .collect();
        let passes: Vec<_> = frames.iter().map(|f| forward(&params, f, Tap::Final).unwrap()).collect();
        if passes.iter().any(|(_, t)| t.kink_margin(&spec) < KINK_MARGIN) {
            continue;
        }
        let e: Vec<Vec<f64>> = passes.iter().map(|(e, _)| e.0.clone()).collect();
        if loss_kink_distance(LossKind::Quadruplet, &e, &cfg) < KINK_MARGIN {
            continue;
        }
        let loss = loss_quadruplet(&e[0], &e[1], &e[2], &e[3], &cfg).unwrap();
        let mut total = backward(&params, &passes[0].1, &loss.grads[0]).unwrap();
        for i in 1..4 {
            total.accumulate(&backward(&params, &passes[i].1, &loss.grads[i]).unwrap());
        }

        let value = |p: &cohere::encoder::EncoderParams| {
            let e: Vec<Vec<f64>> = frames
                .iter()
                .map(|f| cohere::encoder::embed(p, f, Tap::Final).unwrap().0)
                .collect();
            loss_quadruplet(&e[0], &e[1], &e[2], &e[3], &cfg).unwrap().value
        };
        let mut p = params.clone();
        for b in 0..p.blocks().len() {
            for i in 0..p.blocks()[b].weights.len() {
                let orig = p.blocks()[b].weights[i];
                p.blocks_mut()[b].weights[i] = orig + ENCODER_H;
                let plus = value(&p);
                p.blocks_mut()[b].weights[i] = orig - ENCODER_H;
                let minus = value(&p);
                p.blocks_mut()[b].weights[i] = orig;
                let numeric = (plus - minus) / (2.0 * ENCODER_H);
                let err = rel_err(total.blocks[b].weights[i], numeric);
                assert!(err < TOLERANCE, "seed {seed} block {b} weight {i}: {err:.3e}");
            }
        }
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} instances cleared the kink margin");
}
