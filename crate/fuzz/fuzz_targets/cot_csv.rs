#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::cot::{parse_cot_csv, write_cot_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(grids) = parse_cot_csv(data) {
        let bytes = write_cot_csv(&grids);
        assert_eq!(parse_cot_csv(bytes.as_slice()).unwrap(), grids);
    }
});
