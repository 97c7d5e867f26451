#![no_main]

use libfuzzer_sys::fuzz_target;
use transrepair_core::gateway::FixProbabilityTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = FixProbabilityTable::from_json(s) {
            let _ = t.validate();
        }
    }
});
