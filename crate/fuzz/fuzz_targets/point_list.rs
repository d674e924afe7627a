#![no_main]
use libfuzzer_sys::fuzz_target;
use sigrf_cli::points::{parse_point_list, MAX_POINT_DIM};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_point_list(text) {
        let d = points[0].len();
        assert!(d >= 1 && d <= MAX_POINT_DIM);
        assert!(points.iter().all(|p| p.len() == d && p.iter().all(|x| x.is_finite())));
    }
});
