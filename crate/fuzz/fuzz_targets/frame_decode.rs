#![no_main]
use cohere::videoset::{decode_frame, encode_cfr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = decode_frame(data) {
        assert!(frame.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(frame.pixels().len(), frame.shape().len());
        let again = decode_frame(&encode_cfr(&frame)).expect("re-encoded frame decodes");
        assert_eq!(again, frame);
    }
});
