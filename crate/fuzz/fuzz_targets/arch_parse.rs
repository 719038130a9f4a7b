#![no_main]
use cohere::encoder::{EncoderSpec, Tap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<EncoderSpec>() {
        let _ = spec.tap_dim(Tap::Final);
        let _ = spec.tap_dim(Tap::Penultimate);
        let _ = spec.block_sizes();
        let again: EncoderSpec = spec.to_string().parse().expect("display form parses");
        assert_eq!(again, spec);
    }
});
