#![no_main]
use cohere::discovery::{Algorithm, SigmaMode};
use cohere::encoder::Tap;
use cohere::trainer::Mode;
use cohere::videoset::{FrameFormat, FrameShape};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(shape) = text.parse::<FrameShape>() {
        assert_eq!(shape.to_string().parse::<FrameShape>().unwrap(), shape);
    }
    if let Ok(sigma) = text.parse::<SigmaMode>() {
        if let SigmaMode::Fixed(s) = sigma {
            assert!(s > 0.0 && s.is_finite());
        }
    }
    let _ = text.parse::<Algorithm>();
    let _ = text.parse::<Tap>();
    let _ = text.parse::<Mode>();
    let _ = text.parse::<FrameFormat>();
});
