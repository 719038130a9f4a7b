#![no_main]
use cohere::encoder::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = decode_checkpoint(data) {
        assert!(params.is_finite());
        // The architecture string may be non-canonical, so compare values, not bytes.
        let again = decode_checkpoint(&encode_checkpoint(&params)).expect("re-encoded checkpoint decodes");
        assert_eq!(again, params);
    }
});
