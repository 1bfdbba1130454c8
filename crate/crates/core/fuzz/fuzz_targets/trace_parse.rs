#![no_main]

use libfuzzer_sys::fuzz_target;
use qpmix::env::TraceRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for line in text.lines() {
        if let Ok(rec) = TraceRecord::parse_line(line) {
            assert_eq!(TraceRecord::parse_line(&rec.to_line()).expect("canonical line reparses"), rec);
        }
    }
});
