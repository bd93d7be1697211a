#![no_main]
use libfuzzer_sys::fuzz_target;

use fpf_harness::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = parse_config(s) {
            // Anything accepted must describe runnable scenarios.
            for n in spec.substep_values() {
                spec.scenario_for(n, spec.seeds[0]).unwrap();
            }
            assert!(!spec.filter_values().is_empty());
            let _ = spec.hash();
        }
    }
});
