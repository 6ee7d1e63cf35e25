#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(s) {
        let _ = cfg.settings();
    }
});
