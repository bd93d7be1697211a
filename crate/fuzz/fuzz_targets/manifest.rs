#![no_main]
use libfuzzer_sys::fuzz_target;

use fpf_harness::manifest::parse_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = parse_manifest(s) {
            assert_eq!(parse_manifest(&m.to_string()).unwrap(), m);
        }
    }
});
