//! Checked-in fuzz seeds must decode; a seed the parser rejects explores nothing.

use std::path::PathBuf;

use cartogan::serve::parse_tile_request;
use cartogan::PipelineConfig;
use cartogan_core::dataset::DatasetManifest;
use cartogan_core::geo::TileCoord;
use cartogan_core::imageio::{decode_png, decode_ppm_raw};
use cartogan_core::scene::parse_scene;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn every_seed_is_accepted() {
    for (n, b) in seeds("parse_scene") {
        parse_scene(text(&b)).unwrap_or_else(|e| panic!("scene {n}: {e}"));
    }
    for (n, b) in seeds("decode_ppm") {
        decode_ppm_raw(&b).unwrap_or_else(|e| panic!("ppm {n}: {e}"));
    }
    for (n, b) in seeds("decode_png") {
        decode_png(&b).unwrap_or_else(|e| panic!("png {n}: {e}"));
    }
    for (n, b) in seeds("decode_blob") {
        cartogan_autograd::blob::decode(&b).unwrap_or_else(|e| panic!("blob {n}: {e}"));
    }
    for (n, b) in seeds("parse_manifest") {
        DatasetManifest::parse(text(&b)).unwrap_or_else(|e| panic!("manifest {n}: {e}"));
    }
    for (n, b) in seeds("parse_config") {
        PipelineConfig::parse(text(&b)).unwrap_or_else(|e| panic!("config {n}: {e}"));
    }
    for (n, b) in seeds("parse_tile_coord") {
        text(&b).parse::<TileCoord>().unwrap_or_else(|e| panic!("tile {n}: {e}"));
    }
}

#[test]
fn request_seeds_cover_hit_and_miss() {
    let got: Vec<_> = seeds("parse_tile_request").iter().map(|(_, b)| parse_tile_request(text(b)).is_some()).collect();
    assert!(got.contains(&true) && got.contains(&false), "{got:?}");
}
