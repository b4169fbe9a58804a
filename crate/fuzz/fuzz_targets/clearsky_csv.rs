#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::clearsky::parse_clearsky_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_clearsky_csv(data);
});
