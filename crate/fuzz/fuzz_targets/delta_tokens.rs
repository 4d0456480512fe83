#![no_main]

use layerkv::edit::find_delta_tokens;
use libfuzzer_sys::fuzz_target;

// Input is "source\ntarget".
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((source, target)) = text.split_once('\n') else { return };
    if let Ok(d) = find_delta_tokens(source, target) {
        assert!(d.indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.indices.len(), d.words.len());
        let _ = d.runs();
    }
});
