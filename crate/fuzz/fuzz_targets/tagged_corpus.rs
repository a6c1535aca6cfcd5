#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::datasets::filter_ptb_style;
use salbench::datasets::io::parse_tagged_corpus;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = parse_tagged_corpus(text) {
            for inst in filter_ptb_style(&records).instances {
                inst.validate().expect("filtered instances are valid");
            }
        }
    }
});
