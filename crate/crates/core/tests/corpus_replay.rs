//! Runs every checked-in fuzz seed through the same entry points as the
//! fuzz targets, so the parsers stay panic-free on stable toolchains.

use std::fs;
use std::path::Path;

use jdpd_core::config::{apply_override, ExperimentConfig};
use jdpd_core::plot::{parse_table, render};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn config_json_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("config_json") {
        if let Ok(cfg) = ExperimentConfig::load(Some(&text), &[]) {
            let echo = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
            assert_eq!(echo, cfg, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn set_override_seeds() {
    for (_, text) in seeds("set_override") {
        let lines: Vec<String> = text.lines().map(str::to_string).collect();
        let _ = ExperimentConfig::load(None, &lines);
        let mut root = serde_json::json!({});
        for l in &lines {
            let _ = apply_override(&mut root, l);
        }
    }
}

#[test]
fn csv_table_seeds() {
    let mut rendered = 0;
    for (_, text) in seeds("csv_table") {
        if let Ok(t) = parse_table(&text) {
            rendered += usize::from(render(&t).is_ok());
        }
    }
    assert!(rendered >= 5);
}
