#![no_main]

use cartogan_core::scene::{parse_scene, serialize_scene};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = parse_scene(text) {
        // Anything accepted must validate and survive a second trip.
        scene.validate().expect("parsed scene validates");
        let again = parse_scene(&serialize_scene(&scene)).expect("serialized scene parses");
        assert_eq!(serialize_scene(&again), serialize_scene(&scene));
    }
});
