#![no_main]
use libfuzzer_sys::fuzz_target;
use salbench::models::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = checkpoint::decode(data) {
        let bytes = checkpoint::encode(&model).expect("decoded model encodes");
        assert_eq!(checkpoint::decode(&bytes).expect("re-decode"), model);
    }
});
