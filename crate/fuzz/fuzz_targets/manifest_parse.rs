#![no_main]
use cohere::videoset::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::from_json(data) {
        let back = Manifest::from_json(m.to_json().as_bytes()).expect("serialized manifest parses");
        assert_eq!(back, m);
    }
});
