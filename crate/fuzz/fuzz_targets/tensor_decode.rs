#![no_main]

use layerkv_harness::tensor_file::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = decode(data) {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(encode(&t).unwrap(), data);
        let _ = t.clone().into_video();
        let _ = t.into_latent();
    }
});
