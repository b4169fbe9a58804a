#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::cot::parse_cot_mean_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_cot_mean_csv(data);
});
