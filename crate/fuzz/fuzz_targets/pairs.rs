#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::datasets::io::parse_pairs;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_pairs(text);
    }
});
