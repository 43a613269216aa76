#![no_main]

use curvemvg::scene::SceneConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = SceneConfig::from_json_str(s) {
            let _ = cfg.validate();
        }
    }
});
