#![no_main]

use layerkv_harness::config::{parse_layer_list, parse_value_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(layers) = parse_layer_list(text) {
        assert!(layers.windows(2).all(|w| w[0] < w[1]));
    }
    let _ = parse_value_list(text);
});
