#![no_main]
use libfuzzer_sys::fuzz_target;

use fpf_core::filters::FilterKind;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(kind) = s.parse::<FilterKind>() {
            let label = kind.to_string();
            assert_eq!(label.parse::<FilterKind>().unwrap(), kind);
        }
    }
});
