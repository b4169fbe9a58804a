#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::pipeline::parse_aligned_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_aligned_csv(data);
});
