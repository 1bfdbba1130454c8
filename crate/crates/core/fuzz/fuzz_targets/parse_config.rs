#![no_main]

use libfuzzer_sys::fuzz_target;
use qpmix::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_config(text) {
        let emitted = spec.to_toml().expect("resolved spec serializes");
        assert_eq!(parse_config(&emitted).expect("emitted spec reparses"), spec);
    }
});
