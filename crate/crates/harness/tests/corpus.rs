//! Replays the checked-in fuzz corpus through the parsers on the stable
//! toolchain, with the same checks as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use fpf_core::filters::FilterKind;
use fpf_harness::config::parse_config;
use fpf_harness::csvio::{
    read_cells, read_errors, read_rates, read_series, read_summary, read_trace, write_trace,
};
use fpf_harness::manifest::parse_manifest;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter_map(|p| fs::read(&p).ok().map(|b| (p, b)))
        .filter_map(|(p, b)| String::from_utf8(b).ok().map(|s| (p, s)))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn shipped_configs_parse() {
    for (path, text) in seeds("config_parse") {
        let spec = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!spec.filter_values().is_empty());
    }
}

#[test]
fn filter_specs_round_trip() {
    let mut accepted = 0;
    for (_, text) in seeds("filter_spec") {
        if let Ok(kind) = text.parse::<FilterKind>() {
            assert_eq!(kind.to_string().parse::<FilterKind>().unwrap(), kind);
            accepted += 1;
        }
    }
    assert!(accepted >= 9);
}

#[test]
fn trace_seeds_parse_and_round_trip() {
    for (path, text) in seeds("trace_csv") {
        if path.file_name().unwrap() == "truth.csv" {
            read_series(&text, "truth").unwrap();
            continue;
        }
        let trace = read_trace(&text).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}

#[test]
fn table_seeds_parse() {
    let mut parsed = 0;
    for (_, text) in seeds("tables_csv") {
        parsed += [
            read_errors(&text).is_ok(),
            read_cells(&text).is_ok(),
            read_rates(&text).is_ok(),
            read_summary(&text).is_ok(),
        ]
        .iter()
        .filter(|ok| **ok)
        .count();
    }
    assert!(parsed >= 4);
}

#[test]
fn manifest_seeds_round_trip() {
    for (_, text) in seeds("manifest") {
        let m = parse_manifest(&text).unwrap();
        assert_eq!(m.to_string(), text);
    }
}
