#![no_main]

use curvemvg::scene::Report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = Report::from_json_str(s) {
            let _ = r.passed();
            let _ = r.to_json();
        }
    }
});
