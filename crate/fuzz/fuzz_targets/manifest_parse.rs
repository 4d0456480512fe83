#![no_main]

use layerkv_harness::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::parse(data) {
        let _ = m.verify(std::path::Path::new("/nonexistent"));
    }
});
