use cohere::encoder::{encode_checkpoint, init_params, EncoderSpec, GradientSet, Tap};
use cohere::trainer::{
    few_shot_split, finetune_head, sgd_step, train_unsupervised, FinetuneConfig, Mode, TrainConfig,
};
use cohere::videoset::{generate_synthetic, FrameCorpus, FrameShape, LabelTable, SyntheticConfig};

const ARCH: &str = "1x12x12 conv4k3p1 relu pool2 dense24 relu dense12";

fn corpus(classes: usize, seed: u64) -> FrameCorpus {
    generate_synthetic(&SyntheticConfig {
        classes,
        videos_per_class: 2,
        frames_per_video: 24,
        frame_shape: FrameShape::new(1, 12, 12),
        seed,
        offset: 20,
    })
    .unwrap()
}

fn quick(mode: Mode, epochs: usize) -> TrainConfig {
    TrainConfig {
        mode,
        epochs,
        tuples_per_epoch: 200,
        lr0: 0.01,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn spec() -> EncoderSpec {
    ARCH.parse().unwrap()
}

#[test]
fn zero_epochs_returns_init() {
    let c = corpus(2, 1);
    for mode in [Mode::Siamese, Mode::Quadruplet, Mode::Sfa] {
        let r = train_unsupervised(&c, &spec(), &quick(mode, 0)).unwrap();
        assert_eq!(r.params, init_params(&spec(), 5));
        assert!(r.epoch_losses.is_empty());
    }
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let c = corpus(2, 2);
    for mode in [Mode::Siamese, Mode::Quadruplet, Mode::Sfa] {
        let a = train_unsupervised(&c, &spec(), &quick(mode, 2)).unwrap();
        let b = train_unsupervised(&c, &spec(), &quick(mode, 2)).unwrap();
        assert_eq!(encode_checkpoint(&a.params), encode_checkpoint(&b.params));
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let other = train_unsupervised(&c, &spec(), &TrainConfig { seed: 6, ..quick(mode, 2) }).unwrap();
        assert_ne!(a.params, other.params);
    }
}

#[test]
fn quadruplet_loss_decreases_on_two_classes() {
    let c = corpus(2, 3);
    let r = train_unsupervised(&c, &spec(), &quick(Mode::Quadruplet, 8)).unwrap();
    let first = r.epoch_losses[0];
    let last = *r.epoch_losses.last().unwrap();
    assert!(r.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(last < first, "{:?}", r.epoch_losses);
}

#[test]
fn training_ignores_labels() {
    let c = corpus(3, 4);
    let table = c.labels().unwrap().clone();
    let names = table.class_names().iter().rev().cloned().collect();
    let per_frame = (0..c.num_videos())
        .map(|v| table.video_labels(v).iter().map(|&l| 2 - l).collect())
        .collect();
    let permuted = c.clone().with_labels(Some(LabelTable::new(names, per_frame).unwrap())).unwrap();
    let a = train_unsupervised(&c, &spec(), &quick(Mode::Quadruplet, 1)).unwrap();
    let b = train_unsupervised(&permuted, &spec(), &quick(Mode::Quadruplet, 1)).unwrap();
    assert_eq!(encode_checkpoint(&a.params), encode_checkpoint(&b.params));
    assert_eq!(permuted.label_reads(), 0);
}

#[test]
fn sgd_examples() {
    let spec: EncoderSpec = "1x1x1 dense1".parse().unwrap();
    let step = |p0: f64, g: f64, lr: f64, lambda: f64| {
        let mut p = init_params(&spec, 0);
        p.blocks_mut()[0].weights[0] = p0;
        let mut grads = GradientSet::zeros_like(&p);
        grads.blocks[0].weights[0] = g;
        sgd_step(&mut p, &grads, lr, lambda).unwrap();
        p.blocks()[0].weights[0]
    };
    assert!((step(1.0, 0.5, 0.1, 0.0) - 0.95).abs() < 1e-12);
    assert!((step(1.0, 0.5, 0.1, 0.1) - (1.0 - 0.1 * (0.5 + 0.1))).abs() < 1e-12);
    assert!((step(1.0, 0.5, 0.1, 0.1) - 0.94).abs() < 1e-12);
    assert_eq!(step(0.7, 0.0, 0.1, 0.0), 0.7);
}

/// With no data gradient a weight decays geometrically; the bias is untouched.
#[test]
fn weight_decay_is_geometric() {
    let spec: EncoderSpec = "1x1x1 dense1".parse().unwrap();
    let mut p = init_params(&spec, 0);
    p.blocks_mut()[0].weights[0] = 2.5;
    p.blocks_mut()[0].bias[0] = 0.3;
    let zero = GradientSet::zeros_like(&p);
    let (lr, lambda) = (0.05, 0.2);
    for k in 1..=200 {
        sgd_step(&mut p, &zero, lr, lambda).unwrap();
        let want = 2.5 * (1.0 - lr * lambda).powi(k);
        let got = p.blocks()[0].weights[0];
        assert!((got - want).abs() <= 1e-13 * want.abs(), "k = {k}: {got} vs {want}");
    }
    assert_eq!(p.blocks()[0].bias[0], 0.3);
}

#[test]
fn frozen_encoder_is_untouched() {
    let c = corpus(3, 5);
    let params = init_params(&spec(), 9);
    let before = encode_checkpoint(&params);
    let (train, test) = few_shot_split(&c, 3, 1).unwrap();
    let cfg = FinetuneConfig {
        epochs: 20,
        freeze_encoder: true,
        ..FinetuneConfig::default()
    };
    let r = finetune_head(&params, 3, &train, &test, &cfg).unwrap();
    assert_eq!(encode_checkpoint(&r.encoder), before);
    assert_eq!(encode_checkpoint(&params), before);

    let tuned = FinetuneConfig {
        epochs: 5,
        freeze_encoder: false,
        ..cfg
    };
    assert_ne!(encode_checkpoint(&finetune_head(&params, 3, &train, &test, &tuned).unwrap().encoder), before);
}

/// An untrained head scores at chance on a balanced test set.
#[test]
fn zero_epochs_is_chance() {
    for classes in [2usize, 4, 5] {
        let c = corpus(classes, 6);
        let params = init_params(&spec(), 1);
        let (train, test) = few_shot_split(&c, 5, 2).unwrap();
        let cfg = FinetuneConfig {
            epochs: 0,
            ..FinetuneConfig::default()
        };
        let r = finetune_head(&params, classes, &train, &test, &cfg).unwrap();
        let chance = 1.0 / classes as f64;
        assert!((r.test_accuracy - chance).abs() < 0.05, "C = {classes}: {}", r.test_accuracy);
    }
}

#[test]
fn few_shot_split_is_balanced_and_disjoint() {
    let c = corpus(4, 7);
    let (train, test) = few_shot_split(&c, 5, 3).unwrap();
    assert_eq!(train.len(), 20);
    assert_eq!(train.len() + test.len(), c.num_frames());
    let mut counts = [0usize; 4];
    for &(_, l) in &train {
        counts[l] += 1;
    }
    assert_eq!(counts, [5; 4]);
    for &(f, _) in &train {
        assert!(!test.iter().any(|&(g, _)| std::ptr::eq(f, g)));
    }
}

#[test]
fn final_tap_head_matches_embedding_dim() {
    let c = corpus(2, 8);
    let params = init_params(&spec(), 2);
    let (train, test) = few_shot_split(&c, 5, 0).unwrap();
    let cfg = FinetuneConfig {
        epochs: 50,
        lr: 0.1,
        freeze_encoder: true,
        tap: Tap::Final,
        ..FinetuneConfig::default()
    };
    let r = finetune_head(&params, 2, &train, &test, &cfg).unwrap();
    assert_eq!(r.head.dim, 12);
    assert!(r.train_accuracy >= 0.5);
}
