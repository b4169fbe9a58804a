#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::clearsky::parse_clear_flags;

fuzz_target!(|data: &[u8]| {
    let _ = parse_clear_flags(data);
});
