//! `--set key=value` overrides, one per line, applied to the defaults.

#![no_main]

use jdpd_core::config::{apply_override, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let lines: Vec<String> = s.lines().map(str::to_string).collect();
    let _ = ExperimentConfig::load(None, &lines);
    let mut root = serde_json::json!({});
    for l in &lines {
        let _ = apply_override(&mut root, l);
    }
});
