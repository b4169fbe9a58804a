#![no_main]

use libfuzzer_sys::fuzz_target;

use heliocot::imaging::read_exif;
use heliocot::time::utc_offset;

fuzz_target!(|data: &[u8]| {
    let _ = read_exif(data, utc_offset());
});
