#![no_main]

use cartogan_core::imageio::{decode_ppm, decode_ppm_raw, encode_ppm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_ppm_raw(data);
    if let Ok(tile) = decode_ppm(data) {
        assert_eq!(decode_ppm(&encode_ppm(&tile)).unwrap(), tile);
    }
});
