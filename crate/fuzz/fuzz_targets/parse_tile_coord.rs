#![no_main]

use cartogan_core::geo::TileCoord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = text.parse::<TileCoord>() {
        assert_eq!(t.to_string().parse::<TileCoord>().unwrap(), t);
    }
});
