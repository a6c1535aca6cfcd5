#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = RunConfig::parse(text) {
            let again = RunConfig::parse(&config.to_toml()).expect("serialized config parses");
            assert_eq!(again, config);
        }
    }
});
