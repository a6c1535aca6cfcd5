#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::saliency::SaliencyMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = SaliencyMap::from_json(text) {
            assert_eq!(map.tokens.len(), map.scores.len());
        }
    }
});
