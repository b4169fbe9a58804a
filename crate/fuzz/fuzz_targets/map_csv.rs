#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::clearsky::parse_map_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_map_csv(data);
});
