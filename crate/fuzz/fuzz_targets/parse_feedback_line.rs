#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::gateway::parse_feedback_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_feedback_line(s);
    }
});
