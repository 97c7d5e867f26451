#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::exec::parse_verdict_marker;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_verdict_marker(s);
    }
});
