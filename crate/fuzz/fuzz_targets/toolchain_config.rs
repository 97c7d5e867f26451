#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::exec::ToolchainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = ToolchainConfig::from_toml_str(s);
    }
});
