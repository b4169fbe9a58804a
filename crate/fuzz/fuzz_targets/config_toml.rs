#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = PipelineConfig::from_toml_str(text);
    }
});
