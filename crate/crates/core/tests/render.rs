use std::collections::HashSet;

use cartogan_core::geo::{project_to_pixels, tile_bounds, GeoBounds, MercatorPoint, TileCoord};
use cartogan_core::render::*;
use cartogan_core::scene::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn madison() -> TileCoord {
    TileCoord::new(15, 8246, 12031).unwrap()
}

fn city(t: TileCoord, params: &CityParams) -> VectorScene {
    generate_city(21, tile_bounds(t).expand(200.0), params).unwrap()
}

fn leafy() -> CityParams {
    CityParams { park_probability: 0.2, water_probability: 0.15, poi_density: 0.3, ..CityParams::default() }
}

#[test]
fn empty_scene_is_uniform_background() {
    let t = madison();
    let s = VectorScene::empty(tile_bounds(t), 0);
    for sheet in [builtin_simple_sheet(), builtin_target_sheet()] {
        let img = render_tile(&s, t, &sheet, 64).unwrap();
        let bg = sheet.background;
        assert!(img.pixels().chunks(3).all(|p| p == [bg.r, bg.g, bg.b]));
    }
}

#[test]
fn rendering_is_deterministic() {
    let t = madison();
    let s = city(t, &leafy());
    for sheet in [builtin_simple_sheet(), builtin_target_sheet()] {
        let a = render_tile(&s, t, &sheet, 64).unwrap();
        let b = render_tile(&s, t, &sheet, 64).unwrap();
        assert_eq!(a, b);
    }
    assert!(render_tile(&s, t, &builtin_target_sheet(), 100).is_err());
}

/// Distance from a pixel center to a horizontal segment, by cases.
fn horizontal_distance(cx: f64, cy: f64, x0: f64, x1: f64, y: f64) -> f64 {
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    if cx < lo {
        ((cx - lo).powi(2) + (cy - y).powi(2)).sqrt()
    } else if cx > hi {
        ((cx - hi).powi(2) + (cy - y).powi(2)).sqrt()
    } else {
        (cy - y).abs()
    }
}

#[test]
fn thick_line_matches_distance_oracle() {
    let t = madison();
    let b = tile_bounds(t);
    let mut sheet = builtin_simple_sheet();
    let ink = Rgba::rgb(0, 0, 0);
    for c in FeatureClass::ALL {
        let s = &mut sheet.classes[c.index()];
        s.stroke = ink;
        s.stroke_width = ZoomWidths::uniform(3.0);
    }
    for frac in [0.5, 0.3137, 0.75 + 0.5 / 64.0] {
        let y = b.min.y + frac * b.height();
        let (x0, x1) = (b.min.x - 100.0, b.max.x + 100.0);
        let line = vec![MercatorPoint::new(x0, y), MercatorPoint::new(x1, y)];
        let f = VectorFeature { id: 0, class: FeatureClass::RoadPrimary, geometry: Geometry::Polyline(line) };
        let scene = VectorScene { bounds: b.expand(200.0), seed: 0, features: vec![f] };
        let img = render_tile(&scene, t, &sheet, 64).unwrap();
        let painted = img.pixels().chunks(3).filter(|p| *p == [0, 0, 0]).count();
        let (px0, py) = project_to_pixels(MercatorPoint::new(x0, y), &b, 64);
        let (px1, _) = project_to_pixels(MercatorPoint::new(x1, y), &b, 64);
        let mut want = 0;
        for row in 0..64 {
            for col in 0..64 {
                if horizontal_distance(col as f64 + 0.5, row as f64 + 0.5, px0, px1, py) <= 1.5 {
                    want += 1;
                }
            }
        }
        assert_eq!(painted, want, "line at {frac}");
        assert!(want == 192 || want == 256, "{want}");
    }
}

/// Exact rational rounding: num/255 with remainder ≥ 127.5 rounding up.
fn composite_oracle(src: u8, dst: u8, a: u8) -> u8 {
    let num = src as u32 * a as u32 + dst as u32 * (255 - a as u32);
    let (q, r) = (num / 255, num % 255);
    (if 2 * r >= 255 { q + 1 } else { q }) as u8
}

#[test]
fn compositing_matches_oracle_exhaustively() {
    for a in 0..=255u8 {
        for s in 0..=255u8 {
            for d in 0..=255u8 {
                assert_eq!(composite(s, d, a), composite_oracle(s, d, a), "{s} over {d} at {a}");
            }
        }
    }
    assert_eq!(composite(255, 0, 128), 128);
    let mut img = RasterTile::new(64, Rgba::rgb(0, 0, 0)).unwrap();
    fill_polygon(&mut img, &[(0.0, 0.0), (64.0, 0.0), (64.0, 64.0), (0.0, 64.0)], Rgba::rgba(255, 0, 0, 128));
    assert_eq!(img.get(5, 5), [128, 0, 0]);
}

/// All-pairs clustering: precompute the full neighbor matrix, then replay
/// the lowest-id-first absorption rule over it.
fn typify_oracle(pois: &[(u64, (f64, f64))], radius: f64, min_size: usize) -> Vec<(f64, f64)> {
    let n = pois.len();
    let near: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| ((pois[i].1 .0 - pois[j].1 .0).hypot(pois[i].1 .1 - pois[j].1 .1)) <= radius).collect())
        .collect();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.sort_by_key(|&i| pois[i].0);
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &ids {
        if cluster_of[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = ids.iter().copied().filter(|&j| cluster_of[j] == usize::MAX && (j == i || near[i][j])).collect();
        for &m in &members {
            cluster_of[m] = clusters.len();
        }
        clusters.push(members);
    }
    let mut out = Vec::new();
    for c in clusters {
        if c.len() >= min_size {
            let k = c.len() as f64;
            out.push((c.iter().map(|&m| pois[m].1 .0).sum::<f64>() / k, c.iter().map(|&m| pois[m].1 .1).sum::<f64>() / k));
        } else {
            out.extend(c.iter().map(|&m| pois[m].1));
        }
    }
    out
}

#[test]
fn typify_matches_all_pairs_oracle() {
    // Hand case: 0-1 and 3-4 are close pairs, 2 is alone.
    let pois = [(0, (0.0, 0.0)), (1, (3.0, 0.0)), (2, (20.0, 20.0)), (3, (40.0, 5.0)), (4, (40.0, 9.0))];
    let want = vec![(1.5, 0.0), (20.0, 20.0), (40.0, 7.0)];
    assert_eq!(typify_pois(&pois, 5.0, 2), want);
    assert_eq!(typify_oracle(&pois, 5.0, 2), want);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let n = rng.random_range(0..=5);
        let pois: Vec<(u64, (f64, f64))> = (0..n)
            .map(|_| (rng.random_range(0..50), (rng.random_range(0.0..30.0), rng.random_range(0.0..30.0))))
            .collect();
        let r = rng.random_range(1.0..20.0);
        let m = rng.random_range(1..4);
        assert_eq!(typify_pois(&pois, r, m), typify_oracle(&pois, r, m));
    }
}

#[test]
fn three_coincident_pois_become_one_marker() {
    let pois = [(5, (10.0, 10.0)), (6, (10.0, 10.0)), (7, (10.0, 10.0))];
    assert_eq!(typify_pois(&pois, 4.0, 2), vec![(10.0, 10.0)]);
}

#[test]
fn simple_sheet_renders_every_class_at_z15() {
    let t = madison();
    let s = city(t, &leafy());
    let c = render_tile_canvas(&s, t, &builtin_simple_sheet(), 64).unwrap();
    for class in FeatureClass::ALL {
        assert!(c.class_count(class) > 0, "{class} not drawn");
    }
}

#[test]
fn target_sheet_generalizes_buildings_away_at_z15() {
    let t = madison();
    let s = city(t, &CityParams::default());
    assert!(clip_scene(&s, t, 0.0).count(FeatureClass::Building) > 0);
    let sheet = builtin_target_sheet();
    let c15 = render_tile_canvas(&s, t, &sheet, 64).unwrap();
    assert_eq!(c15.class_count(FeatureClass::Building), 0);
    let inner = TileCoord::new(18, 8246 * 8 + 3, 12031 * 8 + 4).unwrap();
    let c18 = render_tile_canvas(&s, inner, &sheet, 64).unwrap();
    assert!(c18.class_count(FeatureClass::Building) > 0);
}

#[test]
fn target_roads_widen_with_zoom() {
    let t15 = madison();
    let t18 = TileCoord::new(18, 8246 * 8 + 3, 12031 * 8 + 4).unwrap();
    let sheet = builtin_target_sheet();
    let width_of = |t: TileCoord| {
        let b = tile_bounds(t);
        let y = b.center().y + 0.37;
        let line = vec![MercatorPoint::new(b.min.x - 50.0, y), MercatorPoint::new(b.max.x + 50.0, y)];
        let f = VectorFeature { id: 0, class: FeatureClass::RoadPrimary, geometry: Geometry::Polyline(line) };
        let s = VectorScene { bounds: b.expand(100.0), seed: 0, features: vec![f] };
        let c = render_tile_canvas(&s, t, &sheet, 64).unwrap();
        c.class_count(FeatureClass::RoadPrimary) / 64
    };
    assert!(width_of(t18) > width_of(t15));
}

#[test]
fn neighbouring_tiles_agree_with_the_joint_render() {
    let t = TileCoord::new(17, 8246 * 4 + 1, 12031 * 4 + 2).unwrap();
    let right = TileCoord::new(17, t.x() + 1, t.y()).unwrap();
    let below = TileCoord::new(17, t.x(), t.y() + 1).unwrap();
    // POIs excluded: clustering depends on what each tile can see.
    let params = CityParams { poi_density: 0.0, ..leafy() };
    let s = generate_city(8, tile_bounds(t).union(&tile_bounds(right)).union(&tile_bounds(below)).expand(300.0), &params).unwrap();
    for sheet in [builtin_simple_sheet(), builtin_target_sheet()] {
        let a = render_tile_canvas(&s, t, &sheet, 64).unwrap();
        let r = render_tile_canvas(&s, right, &sheet, 64).unwrap();
        let d = render_tile_canvas(&s, below, &sheet, 64).unwrap();
        let wide = render_region(&s, &tile_bounds(t).union(&tile_bounds(right)), 17, &sheet, 128, 64);
        let tall = render_region(&s, &tile_bounds(t).union(&tile_bounds(below)), 17, &sheet, 64, 128);
        for y in 0..64usize {
            for (x, tile, src) in [(63usize, &a, 63usize), (0, &r, 64)] {
                let i = y * 64 + x;
                let j = y * 128 + src;
                assert_eq!(tile.rgb[i * 3..i * 3 + 3], wide.rgb[j * 3..j * 3 + 3], "{} column {x} row {y}", sheet.id);
            }
        }
        for x in 0..64usize {
            for (y, tile, src) in [(63usize, &a, 63usize), (0, &d, 64)] {
                let i = y * 64 + x;
                let j = src * 64 + x;
                assert_eq!(tile.rgb[i * 3..i * 3 + 3], tall.rgb[j * 3..j * 3 + 3], "{} row {y} column {x}", sheet.id);
            }
        }
    }
}

#[test]
fn painted_colors_are_palette_closed() {
    let t = TileCoord::new(17, 8246 * 4 + 1, 12031 * 4 + 2).unwrap();
    let s = city(t, &leafy());
    for sheet in [builtin_simple_sheet(), builtin_target_sheet()] {
        let palette = sheet.palette();
        let bg = sheet.background;
        let mut reach: HashSet<[u8; 3]> = HashSet::from([[bg.r, bg.g, bg.b]]);
        let mut frontier: Vec<[u8; 3]> = reach.iter().copied().collect();
        for _ in 0..4 {
            let mut next = Vec::new();
            for d in &frontier {
                for &c in &palette {
                    let out = composite_rgb(c, *d);
                    if reach.insert(out) {
                        next.push(out);
                    }
                }
            }
            frontier = next;
        }
        let c = render_tile_canvas(&s, t, &sheet, 64).unwrap();
        for px in c.rgb.chunks(3) {
            assert!(reach.contains(&[px[0], px[1], px[2]]), "{} produced {px:?}", sheet.id);
        }
    }
}

#[test]
fn render_region_bounds_checked_inputs() {
    let b = GeoBounds::new(MercatorPoint::new(0.0, 0.0), MercatorPoint::new(640.0, 640.0)).unwrap();
    let c = render_region(&VectorScene::empty(b, 0), &b, 18, &builtin_target_sheet(), 64, 64);
    assert_eq!(c.rgb.len(), 64 * 64 * 3);
}
