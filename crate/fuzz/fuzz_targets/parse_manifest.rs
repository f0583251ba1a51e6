#![no_main]

use cartogan_core::dataset::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DatasetManifest::parse(text) {
        assert_eq!(DatasetManifest::parse(&m.to_json()).unwrap(), m);
    }
});
