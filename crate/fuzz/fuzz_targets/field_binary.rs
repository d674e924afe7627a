#![no_main]
use libfuzzer_sys::fuzz_target;
use sigrf::simulate::{decode_binary, encode_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(sample) = decode_binary(data) {
        // accepted inputs are canonical
        assert_eq!(encode_binary(&sample), data);
    }
});
