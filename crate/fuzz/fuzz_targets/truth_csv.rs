#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::synth::parse_truth_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_truth_csv(data);
});
