#![no_main]

use libfuzzer_sys::fuzz_target;
use planar_push::harness::HarnessConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = HarnessConfig::from_toml_str(text) else {
        return;
    };
    if config.validate().is_err() {
        return;
    }
    let again = HarnessConfig::from_toml_str(&config.to_toml_string()).expect("printed config parses");
    assert_eq!(again, config);
});
