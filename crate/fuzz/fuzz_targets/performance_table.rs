#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::strategy::InitialPerformanceTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = InitialPerformanceTable::from_json(s);
    }
});
