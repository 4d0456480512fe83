#![no_main]

use layerkv_harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let _ = cfg.validate(None, false);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});
