use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use cohere::discovery::{evaluate_discovery, evaluate_points, DiscoveryConfig, DiscoveryReport, EmbeddingDump, Granularity};
use cohere::encoder::{batch_forward, init_params, load_checkpoint, save_checkpoint, EncoderParams, EncoderSpec};
use cohere::trainer::{few_shot_split, finetune_head, train_unsupervised, FinetuneConfig, TrainConfig};
use cohere::videoset::{concat_mu, generate_synthetic, load_corpus, write_corpus, FrameCorpus, SyntheticConfig};

use crate::run_manifest::{write_json, RunRecorder};
use crate::{EmbedArgs, EvalArgs, FinetuneArgs, GenArgs, TrainArgs, Usage};

/// `<file>.run.json` next to a file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn manifest_files(manifest: &Path) -> Result<Vec<PathBuf>> {
    let m = cohere::videoset::Manifest::from_json(&fs::read(manifest)?)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let mut out = vec![manifest.to_path_buf()];
    out.extend(m.videos.iter().flat_map(|v| v.frames.iter().map(|f| root.join(f))));
    Ok(out)
}

pub fn gen(a: GenArgs) -> Result<()> {
    let run = RunRecorder::start("gen");
    let cfg = SyntheticConfig {
        classes: a.classes,
        videos_per_class: a.per_class,
        frames_per_video: a.len,
        frame_shape: a.shape,
        seed: a.seed,
        offset: a.n,
    };
    let corpus = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    let manifest = write_corpus(&corpus, &a.out, a.format)?;
    let outputs = manifest_files(&manifest)?;

    #[derive(Serialize)]
    struct Config {
        classes: usize,
        per_class: usize,
        len: usize,
        shape: String,
        n: usize,
        format: String,
    }
    let config = Config {
        classes: a.classes,
        per_class: a.per_class,
        len: a.len,
        shape: a.shape.to_string(),
        n: a.n,
        format: format!("{:?}", a.format).to_lowercase(),
    };
    run.finish(&a.out.join("run.json"), config, a.seed, &outputs, corpus.label_reads())?;
    println!(
        "wrote {} videos ({} frames of {}) to {}",
        corpus.num_videos(),
        corpus.num_frames(),
        corpus.frame_shape(),
        manifest.display()
    );
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_json(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    set!(
        mode => cfg.mode,
        epochs => cfg.epochs,
        tuples => cfg.tuples_per_epoch,
        lr0 => cfg.lr0,
        lambda => cfg.lambda,
        gamma => cfg.lr_schedule.gamma,
        batch_pairs => cfg.batch_pairs,
        batch_quads => cfg.batch_quads,
        w => cfg.w,
        n => cfg.n,
        delta => cfg.delta,
        alpha => cfg.alpha,
        positive_fraction => cfg.positive_fraction,
        seed => cfg.seed,
    );
    if a.lr_step.is_some() {
        cfg.lr_schedule.step = a.lr_step;
    }
    if a.mu_gap.is_some() {
        cfg.mu_gap = a.mu_gap;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_spec(corpus: &FrameCorpus, arch: Option<&str>, dim: usize) -> Result<EncoderSpec> {
    Ok(match arch {
        Some(text) => text.parse()?,
        None => EncoderSpec::desk_default(corpus.frame_shape(), dim)?,
    })
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    mode: String,
    seed: u64,
    arch: String,
    mu: bool,
    config: &'a TrainConfig,
    epoch_losses: &'a [f64],
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut run = RunRecorder::start("train");
    let cfg = train_config(&a)?;
    run.input(&a.corpus);
    let mut corpus = load_corpus(&a.corpus)?;
    if a.mu {
        corpus = concat_mu(&corpus, cfg.seed)?;
    }
    let spec = resolve_spec(
        &corpus,
        a.arch.as_deref(),
        a.embedding_dim.unwrap_or(cfg.mode.default_embedding_dim()),
    )?;
    let report = train_unsupervised(&corpus, &spec, &cfg)?;

    create_dir(&a.out)?;
    let ckpt = a.out.join("encoder.cenc");
    save_checkpoint(&report.params, &ckpt)?;
    let summary_path = a.out.join("train_report.json");
    write_json(
        &summary_path,
        &TrainSummary {
            mode: cfg.mode.to_string(),
            seed: cfg.seed,
            arch: spec.to_string(),
            mu: a.mu,
            config: &cfg,
            epoch_losses: &report.epoch_losses,
        },
    )?;
    run.finish(
        &a.out.join("run.json"),
        &cfg,
        cfg.seed,
        &[ckpt.clone(), summary_path],
        corpus.label_reads(),
    )?;
    println!(
        "trained {} encoder for {} epochs (final loss {}) -> {}",
        cfg.mode,
        cfg.epochs,
        report
            .epoch_losses
            .last()
            .map_or_else(|| "n/a".to_string(), |l| format!("{l:.6}")),
        ckpt.display()
    );
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let mut run = RunRecorder::start("embed");
    run.input(&a.checkpoint);
    run.input(&a.corpus);
    let params = load_checkpoint(&a.checkpoint)?;
    let corpus = load_corpus(&a.corpus)?;
    let refs = corpus.frame_refs();
    let frames: Vec<_> = refs.iter().map(|&r| corpus.frame(r)).collect();
    let rows: Vec<Vec<f64>> = batch_forward(&params, &frames, a.tap)?.into_iter().map(|e| e.0).collect();
    let labels = match (a.with_labels, corpus.has_labels()) {
        (true, true) => {
            let table = corpus.labels().expect("checked above");
            refs.iter().map(|&r| Some(table.label(r) as u32)).collect()
        }
        (true, false) => return Err(cohere::Error::MissingLabels("the corpus has no labels".into()).into()),
        (false, _) => vec![None; rows.len()],
    };
    let dump = EmbeddingDump::new(&rows, labels)?;
    create_parent(&a.out)?;
    dump.save(&a.out)?;

    #[derive(Serialize)]
    struct Config {
        tap: String,
        with_labels: bool,
    }
    let config = Config {
        tap: a.tap.to_string(),
        with_labels: a.with_labels,
    };
    run.finish(&sidecar(&a.out), config, 0, &[a.out.clone()], corpus.label_reads())?;
    println!("wrote {} embeddings of dimension {} to {}", dump.len(), dump.dim(), a.out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut run = RunRecorder::start("eval");
    let cfg = DiscoveryConfig {
        algorithm: a.algo,
        k: a.k,
        repeats: a.repeats,
        seed: a.seed,
        tap: a.tap,
        sigma: a.sigma,
        max_iters: a.max_iters,
        granularity: if a.per_video {
            Granularity::VideoMajority
        } else {
            Granularity::Frame
        },
        subsample: a.subsample,
    };
    let mut label_reads = 0;
    let report: DiscoveryReport = match (&a.checkpoint, &a.corpus, &a.embeddings) {
        (Some(ckpt), Some(corpus_path), None) => {
            run.input(ckpt);
            run.input(corpus_path);
            let params = load_checkpoint(ckpt)?;
            let corpus = load_corpus(corpus_path)?;
            let report = evaluate_discovery(&params, &corpus, &cfg)?;
            label_reads = corpus.label_reads();
            report
        }
        (None, None, Some(dump_path)) => {
            run.input(dump_path);
            if a.per_video {
                return Err(Usage("--per-video needs a corpus; embedding dumps carry no video ids".into()).into());
            }
            let dump = EmbeddingDump::load(dump_path)?;
            let labels = dump
                .labels()
                .iter()
                .map(|l| l.map(|v| v as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| cohere::Error::MissingLabels("the embedding dump has unlabeled items".into()))?;
            let n = labels.len();
            evaluate_points(dump.rows(), labels, vec![0; n], &cfg)?
        }
        _ => {
            return Err(Usage("give either --checkpoint with --corpus, or --embeddings".into()).into());
        }
    };

    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_json(out, &report)?;
        run.finish(&sidecar(out), cfg, cfg.seed, &[out.clone()], label_reads)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Arm {
    init: String,
    train_accuracy: Vec<f64>,
    test_accuracy: Vec<f64>,
    median_test_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct FinetuneOutput {
    per_class: usize,
    freeze_encoder: bool,
    tap: String,
    seeds: Vec<u64>,
    train_items: usize,
    test_items: usize,
    arms: Vec<Arm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    uplift: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    median_uplift: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn finetune(a: FinetuneArgs) -> Result<()> {
    let mut run = RunRecorder::start("finetune");
    if a.seeds == 0 {
        return Err(Usage("--seeds must be ≥ 1".into()).into());
    }
    run.input(&a.corpus);
    let corpus = load_corpus(&a.corpus)?;
    let classes = corpus
        .labels()
        .ok_or_else(|| cohere::Error::MissingLabels("fine-tuning needs a labeled corpus".into()))?
        .num_classes();

    let pretrained: Option<EncoderParams> = if a.init == "random" {
        if a.compare {
            return Err(Usage("--compare needs --init <checkpoint>".into()).into());
        }
        None
    } else {
        run.input(&a.init);
        Some(load_checkpoint(&a.init)?)
    };
    let spec = match &pretrained {
        Some(p) => p.spec().clone(),
        None => resolve_spec(&corpus, a.arch.as_deref(), a.embedding_dim.unwrap_or(64))?,
    };

    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| a.seed.wrapping_add(i)).collect();
    let mut arms: Vec<(String, Option<&EncoderParams>)> = Vec::new();
    if let Some(p) = &pretrained {
        arms.push(("checkpoint".into(), Some(p)));
    }
    if pretrained.is_none() || a.compare {
        arms.push(("random".into(), None));
    }

    let mut out_arms = Vec::new();
    let (mut train_items, mut test_items) = (0, 0);
    for (name, init) in &arms {
        let mut train_acc = Vec::new();
        let mut test_acc = Vec::new();
        for &seed in &seeds {
            let (train, test) = few_shot_split(&corpus, a.per_class, seed)?;
            (train_items, test_items) = (train.len(), test.len());
            let encoder = match init {
                Some(p) => (*p).clone(),
                None => init_params(&spec, seed),
            };
            let cfg = FinetuneConfig {
                epochs: a.epochs,
                lr: a.lr,
                lambda: a.lambda,
                batch: a.batch,
                freeze_encoder: a.freeze_encoder,
                tap: a.tap,
                seed,
            };
            let r = finetune_head(&encoder, classes, &train, &test, &cfg)?;
            log::info!("{name} seed {seed}: train {:.3}, test {:.3}", r.train_accuracy, r.test_accuracy);
            train_acc.push(r.train_accuracy);
            test_acc.push(r.test_accuracy);
        }
        out_arms.push(Arm {
            init: name.clone(),
            median_test_accuracy: median(&test_acc),
            train_accuracy: train_acc,
            test_accuracy: test_acc,
        });
    }
    let uplift = (out_arms.len() == 2).then(|| {
        out_arms[0]
            .test_accuracy
            .iter()
            .zip(&out_arms[1].test_accuracy)
            .map(|(p, r)| p - r)
            .collect::<Vec<f64>>()
    });
    let output = FinetuneOutput {
        per_class: a.per_class,
        freeze_encoder: a.freeze_encoder,
        tap: a.tap.to_string(),
        seeds: seeds.clone(),
        train_items,
        test_items,
        median_uplift: uplift.as_deref().map(median),
        uplift,
        arms: out_arms,
    };

    println!("{}", serde_json::to_string_pretty(&output)?);
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_json(out, &output)?;
        #[derive(Serialize)]
        struct Config<'a> {
            init: &'a str,
            compare: bool,
            seeds: usize,
            per_class: usize,
            epochs: usize,
            lr: f64,
            lambda: f64,
            batch: usize,
            freeze_encoder: bool,
            tap: String,
            arch: String,
        }
        let config = Config {
            init: &a.init,
            compare: a.compare,
            seeds: a.seeds,
            per_class: a.per_class,
            epochs: a.epochs,
            lr: a.lr,
            lambda: a.lambda,
            batch: a.batch,
            freeze_encoder: a.freeze_encoder,
            tap: a.tap.to_string(),
            arch: spec.to_string(),
        };
        run.finish(&sidecar(out), config, a.seed, &[out.clone()], corpus.label_reads())?;
    }
    Ok(())
}
