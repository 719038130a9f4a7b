#![no_main]
use cohere::discovery::EmbeddingDump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dump) = EmbeddingDump::decode(data) {
        assert_eq!(dump.rows().len(), dump.len());
        assert_eq!(dump.encode(), data);
    }
});
