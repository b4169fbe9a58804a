#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::imaging::{parse_luminance_csv, write_luminance_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = parse_luminance_csv(data) {
        let bytes = write_luminance_csv(&samples);
        assert_eq!(parse_luminance_csv(bytes.as_slice()).unwrap(), samples);
    }
});
