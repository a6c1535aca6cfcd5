#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::datasets::io::parse_instances;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(instances) = parse_instances(text) {
            for inst in &instances {
                inst.validate().expect("parsed instances are valid");
            }
        }
    }
});
