#![no_main]

use cartogan_autograd::blob::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = decode(data) {
        let again = decode(&encode(&records)).expect("re-encoded blob decodes");
        assert_eq!(again.len(), records.len());
    }
});
