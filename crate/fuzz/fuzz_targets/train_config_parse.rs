#![no_main]
use cohere::trainer::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = TrainConfig::from_json(data) {
        let _ = cfg.schedule();
        let _ = cfg.loss_config();
        let _ = cfg.sampler_params();
    }
});
