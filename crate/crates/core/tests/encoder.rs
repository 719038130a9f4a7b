use cohere::encoder::{
    batch_forward, decode_checkpoint, embed, encode_checkpoint, forward, init_params, init_variance, EncoderParams,
    EncoderSpec, Tap,
};
use cohere::seeded_rng;
use cohere::videoset::{generate_synthetic, sample_quads, Frame, FrameShape, SamplerParams, SyntheticConfig};
use proptest::prelude::*;
use rand::Rng;

fn frames(shape: FrameShape, count: usize, seed: u64) -> Vec<Frame> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| Frame::new(shape, (0..shape.len()).map(|_| rng.random::<f32>()).collect()).unwrap())
        .collect()
}

/// Every route to an embedding goes through the one parameter set, so the
/// same frame gives the same bits whichever branch it is fed through.
#[test]
fn branches_share_weights() {
    let spec = EncoderSpec::desk_default(FrameShape::new(1, 16, 16), 64).unwrap();
    let params = init_params(&spec, 3);
    let f = frames(spec.input(), 3, 1);
    let batch = [&f[0], &f[1], &f[0], &f[2], &f[0]];
    for tap in [Tap::Final, Tap::Penultimate] {
        let out = batch_forward(&params, &batch, tap).unwrap();
        let solo = embed(&params, &f[0], tap).unwrap();
        for i in [0, 2, 4] {
            let a: Vec<u64> = out[i].iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = solo.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(forward(&params, &f[0], tap).unwrap().0, solo);
    }
}

#[test]
fn quadruplet_batch_equals_four_forwards() {
    let corpus = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let spec = EncoderSpec::desk_default(corpus.frame_shape(), 64).unwrap();
    let params = init_params(&spec, 8);
    let quads = sample_quads(&corpus, &SamplerParams::new(1, 20), 10, &mut seeded_rng(2)).unwrap();
    for q in quads {
        let refs = [q.anchor, q.neighbor, q.nonneighbor, q.negative];
        let batch: Vec<&Frame> = refs.iter().map(|&r| corpus.frame(r)).collect();
        let out = batch_forward(&params, &batch, Tap::Final).unwrap();
        for (emb, f) in out.iter().zip(&batch) {
            assert_eq!(emb, &forward(&params, f, Tap::Final).unwrap().0);
        }
    }
}

/// Sample variance of every large weight block against the fan-in target.
#[test]
fn init_variance_statistics() {
    let spec = EncoderSpec::desk_default(FrameShape::new(1, 16, 16), 128).unwrap();
    let params = init_params(&spec, 21);
    let mut checked = 0;
    for (block, (weights, bias)) in params.blocks().iter().zip(spec.block_sizes()) {
        if weights < 1000 {
            continue;
        }
        let n = block.weights.len() as f64;
        let mean = block.weights.iter().sum::<f64>() / n;
        let var = block.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = init_variance(weights / bias);
        assert!((var / target - 1.0).abs() < 0.2, "var {var} vs target {target}");
        checked += 1;
    }
    assert!(checked >= 2);
    assert_ne!(params, init_params(&spec, 22));
}

fn arb_params() -> impl Strategy<Value = EncoderParams> {
    let archs = prop_oneof![
        Just("1x4x4 dense3"),
        Just("2x5x5 conv2k3p1 relu pool2 dense4 relu dense2"),
        Just("3x6x6 conv4k3p0 relu dense5 relu dense3"),
    ];
    (archs, any::<u64>(), -5.0..5.0f64).prop_map(|(arch, seed, bias)| {
        let spec: EncoderSpec = arch.parse().unwrap();
        let mut p = init_params(&spec, seed);
        for block in p.blocks_mut() {
            block.bias.iter_mut().for_each(|b| *b = bias);
        }
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn checkpoint_roundtrip(p in arb_params()) {
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &p.to_f32_precision());
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn flipped_byte_is_rejected(p in arb_params(), pos: prop::sample::Index, bit in 0u8..8) {
        let mut bytes = encode_checkpoint(&p);
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn batch_permutation_permutes_outputs(p in arb_params(), seed: u64) {
        let f = frames(p.spec().input(), 4, seed);
        let fwd: Vec<&Frame> = f.iter().collect();
        let rev: Vec<&Frame> = f.iter().rev().collect();
        let a = batch_forward(&p, &fwd, Tap::Final).unwrap();
        let mut b = batch_forward(&p, &rev, Tap::Final).unwrap();
        b.reverse();
        prop_assert_eq!(a, b);
    }
}
