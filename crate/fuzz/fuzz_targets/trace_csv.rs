#![no_main]
use libfuzzer_sys::fuzz_target;

use fpf_harness::csvio::{read_series, read_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let _ = read_series(s, "truth");
    if let Ok(trace) = read_trace(s) {
        let mut buf = Vec::new();
        if write_trace(&mut buf, &trace).is_ok() {
            let back = read_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back.len(), trace.len());
            assert_eq!(back.label, trace.label);
        }
    }
});
