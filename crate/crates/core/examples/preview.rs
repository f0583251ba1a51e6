use cartogan_core::geo::{tile_bounds, TileCoord};
use cartogan_core::imageio::write_tile;
use cartogan_core::render::{builtin_simple_sheet, builtin_target_sheet, render_tile};
use cartogan_core::scene::{generate_city, CityParams};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "preview".into());
    let t15 = TileCoord::new(15, 8246, 12031).unwrap();
    let scene = generate_city(1, tile_bounds(t15).expand(300.0), &CityParams::default()).unwrap();
    for t in [t15, TileCoord::new(18, 8246 * 8 + 3, 12031 * 8 + 4).unwrap()] {
        for (name, sheet) in [("simple", builtin_simple_sheet()), ("target", builtin_target_sheet())] {
            let tile = render_tile(&scene, t, &sheet, 256).unwrap();
            write_tile(&std::path::Path::new(&out).join(format!("{name}_z{}.png", t.z())), &tile).unwrap();
        }
    }
}
