#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::config::EngineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = EngineConfig::from_toml_str(s) {
            let _ = EngineConfig::from_toml_str(&cfg.to_toml());
        }
    }
});
