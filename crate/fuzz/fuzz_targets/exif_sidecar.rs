#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::imaging::ExifSidecar;
use heliocot::time::utc_offset;

fuzz_target!(|data: &[u8]| {
    let _ = ExifSidecar::parse(data, utc_offset());
});
