#![no_main]
use libfuzzer_sys::fuzz_target;
use sigrf::model::{validate, SpectralModel};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = SpectralModel::from_json(text) {
        let _ = validate(&model);
        let again = SpectralModel::from_json(&model.to_json()).expect("round trip");
        assert_eq!(again, model);
    }
});
