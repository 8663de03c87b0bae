//! Arbitrary text as an experiment configuration file.

#![no_main]

use jdpd_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::load(Some(s), &[]) {
            // A validated config must echo back to itself.
            let echoed = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
            assert_eq!(echoed, cfg);
            let _ = cfg.simulation_config();
        }
    }
});
