#![no_main]
use libfuzzer_sys::fuzz_target;

use fpf_harness::csvio::{read_cells, read_errors, read_rates, read_summary, write_rates};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let _ = read_errors(s);
    let _ = read_cells(s);
    let _ = read_summary(s);
    if let Ok((meta, rows)) = read_rates(s) {
        if let Some(hash) = meta.get("config_hash") {
            let mut buf = Vec::new();
            if write_rates(&mut buf, hash, &rows).is_ok() {
                let (_, back) = read_rates(std::str::from_utf8(&buf).unwrap()).unwrap();
                assert_eq!(back.len(), rows.len());
            }
        }
    }
});
