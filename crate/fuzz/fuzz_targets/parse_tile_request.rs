#![no_main]

use cartogan::serve::parse_tile_request;
use cartogan_core::dataset::tile_path;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(path) = std::str::from_utf8(data) else { return };
    if let Some((t, fmt)) = parse_tile_request(path) {
        assert_eq!(parse_tile_request(&format!("/tiles/{}", tile_path(t, fmt))), Some((t, fmt)));
    }
});
