#![no_main]

use bmvd_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_toml_str(text) {
        // A resolved configuration must parse back to itself.
        let resolved = config.to_toml_string().expect("valid configuration serializes");
        let again = ExperimentConfig::from_toml_str(&resolved).expect("resolved configuration parses");
        assert_eq!(again.to_toml_string().unwrap(), resolved);
    }
});
