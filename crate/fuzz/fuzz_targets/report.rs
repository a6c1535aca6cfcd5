#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::pipeline::{parse_table, Report};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_table(text);
        let _ = Report::from_json(text);
    }
});
