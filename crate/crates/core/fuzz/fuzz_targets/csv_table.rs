#![no_main]

use jdpd_core::plot::{parse_table, render};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = parse_table(s) {
            let _ = render(&t);
        }
    }
});
