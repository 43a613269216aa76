#![no_main]

use curvemvg::scene::parse_int_range;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = parse_int_range(s) {
            assert!(r.start() <= r.end());
        }
    }
});
