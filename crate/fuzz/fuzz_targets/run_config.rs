#![no_main]
use libfuzzer_sys::fuzz_target;
use sigrf_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        let json = serde_json::to_string(&cfg).expect("configs serialize");
        assert_eq!(RunConfig::from_json(&json).expect("round trip"), cfg);
    }
});
