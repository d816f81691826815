#![no_main]

use bmvd_core::EPoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(point) = text.parse::<EPoint>() {
        let again: EPoint = point.to_string().parse().expect("displayed point parses");
        assert_eq!(again, point);
    }
});
