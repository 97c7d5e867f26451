#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::gateway::{parse_fixture_line, ScriptedBackend};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_fixture_line(s);
        let _ = ScriptedBackend::from_jsonl(s);
    }
});
