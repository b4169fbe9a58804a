#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::time::{utc_offset, UtcInstant};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = UtcInstant::parse_with_offset(text, utc_offset()) {
            assert_eq!(t.to_string().parse::<UtcInstant>().unwrap(), t);
        }
    }
});
