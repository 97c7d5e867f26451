#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::gateway::{extract_code, parse_final_answer};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let code = extract_code(s);
        let _ = extract_code(&code);
        let _ = parse_final_answer(s);
    }
});
