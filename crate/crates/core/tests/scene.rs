use cartogan_core::geo::{tile_bounds, GeoBounds, MercatorPoint, TileCoord};
use cartogan_core::scene::*;
use proptest::prelude::*;

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> GeoBounds {
    GeoBounds::new(MercatorPoint::new(x0, y0), MercatorPoint::new(x1, y1)).unwrap()
}

fn city_bounds() -> GeoBounds {
    bx(-9_952_000.0, 5_322_000.0, -9_951_000.0, 5_323_000.0)
}

#[test]
fn generation_is_deterministic() {
    let p = CityParams::default();
    let a = serialize_scene(&generate_city(11, city_bounds(), &p).unwrap());
    let b = serialize_scene(&generate_city(11, city_bounds(), &p).unwrap());
    assert_eq!(a, b);
    let c = serialize_scene(&generate_city(12, city_bounds(), &p).unwrap());
    assert_ne!(a, c);
}

#[test]
fn zeroed_generators_leave_roads_only() {
    let p = CityParams { building_density: 0.0, park_probability: 0.0, water_probability: 0.0, ..CityParams::default() };
    let s = generate_city(5, city_bounds(), &p).unwrap();
    assert!(!s.features.is_empty());
    assert!(s.features.iter().all(|f| f.class.is_road()));
}

#[test]
fn default_city_has_every_class() {
    let s = generate_city(3, bx(0.0, 0.0, 3000.0, 3000.0), &CityParams::default()).unwrap();
    for c in FeatureClass::ALL {
        assert!(s.count(c) > 0, "{c} missing");
    }
    s.validate().unwrap();
    let mut ids: Vec<u64> = s.features.iter().map(|f| f.id).collect();
    ids.dedup();
    assert_eq!(ids, (0..s.features.len() as u64).collect::<Vec<_>>());
}

/// Independent statement of the subdivision rule: blocks come from
/// rounding the extent to whole spacings, the interior loses the jitter
/// band and setback on each side, lots are whole multiples of 22 m.
fn oracle_building_count(w: f64, h: f64, block: f64, jitter: f64) -> usize {
    let nx = (w / block).round().max(1.0);
    let ny = (h / block).round().max(1.0);
    let (sx, sy) = (w / nx, h / ny);
    let s = sx.min(sy);
    let band = 2.0 * (jitter * s + 0.06 * s);
    let lots = |inner: f64| ((inner / 22.0).floor()).max(1.0);
    (nx * ny * lots(sx - band) * lots(sy - band)) as usize
}

#[test]
fn full_density_building_count_matches_oracle() {
    let dense = |block, jitter| CityParams {
        block_size: block,
        road_jitter: jitter,
        building_density: 1.0,
        park_probability: 0.0,
        water_probability: 0.0,
        poi_density: 0.0,
    };
    // Four 120 m blocks: each 81.6 m interior holds 3 x 3 lots.
    let s = generate_city(1, bx(0.0, 0.0, 240.0, 240.0), &dense(120.0, 0.1)).unwrap();
    assert_eq!(oracle_building_count(240.0, 240.0, 120.0, 0.1), 36);
    assert_eq!(s.count(FeatureClass::Building), 36);
    // 3 x 3 blocks of 100 x 83.3 m: 73.3 by 56.7 m interiors, 3 x 2 lots.
    let s = generate_city(2, bx(0.0, 0.0, 300.0, 250.0), &dense(100.0, 0.1)).unwrap();
    assert_eq!(oracle_building_count(300.0, 250.0, 100.0, 0.1), 54);
    assert_eq!(s.count(FeatureClass::Building), 54);
    for (w, h, b, j) in [(1000.0, 640.0, 90.0, 0.2), (500.0, 500.0, 150.0, 0.0), (777.0, 333.0, 111.0, 0.25)] {
        let s = generate_city(9, bx(0.0, 0.0, w, h), &dense(b, j)).unwrap();
        assert_eq!(s.count(FeatureClass::Building), oracle_building_count(w, h, b, j), "{w}x{h} block {b}");
    }
}

#[test]
fn rejects_bad_inputs() {
    assert!(generate_city(1, bx(0.0, 0.0, 50.0, 500.0), &CityParams::default()).is_err());
    for p in [
        CityParams { block_size: 0.0, ..CityParams::default() },
        CityParams { road_jitter: 0.3, ..CityParams::default() },
        CityParams { building_density: 1.5, ..CityParams::default() },
        CityParams { water_probability: -0.1, ..CityParams::default() },
        CityParams { poi_density: f64::NAN, ..CityParams::default() },
    ] {
        assert!(generate_city(1, city_bounds(), &p).is_err(), "{p:?}");
    }
}

#[test]
fn clip_outside_tile_is_empty() {
    let s = generate_city(4, city_bounds(), &CityParams::default()).unwrap();
    let far = TileCoord::new(15, 0, 0).unwrap();
    assert!(clip_scene(&s, far, 10.0).features.is_empty());
}

#[test]
fn clip_keeps_interior_features_untouched() {
    let t = TileCoord::new(15, 8246, 12031).unwrap();
    let b = tile_bounds(t);
    let c = b.center();
    let ring = vec![
        MercatorPoint::new(c.x - 10.0, c.y - 10.0),
        MercatorPoint::new(c.x + 10.0, c.y - 10.0),
        MercatorPoint::new(c.x + 10.0, c.y + 10.0),
        MercatorPoint::new(c.x - 10.0, c.y + 10.0),
    ];
    let f = VectorFeature { id: 3, class: FeatureClass::Building, geometry: Geometry::Polygon(ring) };
    let s = VectorScene { bounds: b, seed: 0, features: vec![f.clone()] };
    assert_eq!(clip_scene(&s, t, 0.0).features, vec![f]);
}

type P = (f64, f64);

/// Vertex set of the intersection of two convex CCW polygons, found by
/// brute force: every vertex of either polygon and every pairwise edge
/// crossing, kept if it satisfies all half-planes of both.
fn half_plane_oracle(a: &[P], b: &[P]) -> Vec<P> {
    let edges = |poly: &[P]| -> Vec<(P, P)> { (0..poly.len()).map(|i| (poly[i], poly[(i + 1) % poly.len()])).collect() };
    let planes: Vec<(P, P)> = edges(a).into_iter().chain(edges(b)).collect();
    let inside = |p: P| planes.iter().all(|&(s, e)| (e.0 - s.0) * (p.1 - s.1) - (e.1 - s.1) * (p.0 - s.0) >= -1e-9);
    let mut cands: Vec<P> = a.iter().chain(b.iter()).copied().collect();
    for &(p1, p2) in &planes {
        for &(q1, q2) in &planes {
            let d = (p2.0 - p1.0) * (q2.1 - q1.1) - (p2.1 - p1.1) * (q2.0 - q1.0);
            if d.abs() < 1e-12 {
                continue;
            }
            let t = ((q1.0 - p1.0) * (q2.1 - q1.1) - (q1.1 - p1.1) * (q2.0 - q1.0)) / d;
            let u = ((q1.0 - p1.0) * (p2.1 - p1.1) - (q1.1 - p1.1) * (p2.0 - p1.0)) / d;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                cands.push((p1.0 + t * (p2.0 - p1.0), p1.1 + t * (p2.1 - p1.1)));
            }
        }
    }
    let mut out: Vec<P> = Vec::new();
    for p in cands.into_iter().filter(|&p| inside(p)) {
        if !out.iter().any(|q| (q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9) {
            out.push(p);
        }
    }
    out
}

fn same_set(a: &[P], b: &[P]) -> bool {
    a.len() == b.len() && a.iter().all(|p| b.iter().any(|q| (q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9))
}

#[test]
fn straddling_square_matches_half_plane_oracle() {
    let clip = bx(0.0, 0.0, 10.0, 10.0);
    let clip_ring: Vec<P> = vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
    let squares: [Vec<P>; 2] = [
        vec![(-4.0, 3.0), (6.0, 3.0), (6.0, 13.0), (-4.0, 13.0)],
        // Rotated 45 degrees over the bottom-right corner.
        vec![(10.0, -6.0), (16.0, 0.0), (10.0, 6.0), (4.0, 0.0)],
    ];
    for sq in squares {
        let ring: Vec<MercatorPoint> = sq.iter().map(|&(x, y)| MercatorPoint::new(x, y)).collect();
        let got: Vec<P> = clip_polygon(&ring, &clip).unwrap().iter().map(|p| (p.x, p.y)).collect();
        let want = half_plane_oracle(&sq, &clip_ring);
        assert!(same_set(&got, &want), "got {got:?}, want {want:?}");
    }
    // The first case, spelled out.
    let got = clip_polygon(
        &[(-4.0, 3.0), (6.0, 3.0), (6.0, 13.0), (-4.0, 13.0)].map(|(x, y)| MercatorPoint::new(x, y)),
        &clip,
    )
    .unwrap();
    assert!(same_set(&got.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>(), &[(0.0, 3.0), (6.0, 3.0), (6.0, 10.0), (0.0, 10.0)]));
}

fn mm() -> impl Strategy<Value = f64> {
    (0i64..1_000_000).prop_map(|v| v as f64 / 1000.0)
}

fn feature() -> impl Strategy<Value = (FeatureClass, Vec<MercatorPoint>)> {
    let pt = || (mm(), mm()).prop_map(|(x, y)| MercatorPoint::new(x, y));
    prop_oneof![
        pt().prop_map(|p| (FeatureClass::Poi, vec![p])),
        (0usize..3, prop::collection::vec(pt(), 2..8)).prop_map(|(k, v)| (
            [FeatureClass::RoadPrimary, FeatureClass::RoadSecondary, FeatureClass::RoadResidential][k],
            v
        )),
        (0usize..3, 0i64..1_000_000, 0i64..1_000_000, 1i64..50_000, 1i64..50_000).prop_map(|(k, x, y, w, h)| {
            let p = |x: i64, y: i64| MercatorPoint::new(x as f64 / 1000.0, y as f64 / 1000.0);
            let ring = vec![p(x, y), p(x + w, y), p(x + w, y + h), p(x, y + h)];
            ([FeatureClass::Building, FeatureClass::Water, FeatureClass::Grass][k], ring)
        }),
    ]
}

fn scene_of(seed: u64, feats: Vec<(FeatureClass, Vec<MercatorPoint>)>) -> VectorScene {
    let features = feats
        .into_iter()
        .enumerate()
        .map(|(i, (class, v))| {
            let geometry = match class.kind() {
                GeometryKind::Point => Geometry::Point(v[0]),
                GeometryKind::Polyline => Geometry::Polyline(v),
                GeometryKind::Polygon => Geometry::Polygon(v),
            };
            VectorFeature { id: i as u64 * 3, class, geometry }
        })
        .collect();
    VectorScene { bounds: bx(-0.5, -0.5, 1050.25, 1050.125), seed, features }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_scenes_round_trip(seed in any::<u64>(), feats in prop::collection::vec(feature(), 500)) {
        let s = scene_of(seed, feats);
        let text = serialize_scene(&s);
        let back = parse_scene(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_scene(&back), text);
    }

    #[test]
    fn generated_scenes_round_trip_and_validate(seed in any::<u64>(), w in 240.0f64..1500.0, h in 240.0f64..1500.0) {
        let b = bx(1234.5678, -987.654321, 1234.5678 + w, -987.654321 + h);
        let s = generate_city(seed, b, &CityParams::default()).unwrap();
        prop_assert!(s.validate().is_ok(), "{:?}", s.validate());
        for f in &s.features {
            for p in f.geometry.vertices() {
                prop_assert!(b.contains(*p));
            }
        }
        prop_assert_eq!(parse_scene(&serialize_scene(&s)).unwrap(), s);
    }

    #[test]
    fn clipping_never_degenerates(seed in any::<u64>(), dx in -300.0f64..300.0, dy in -300.0f64..300.0, half in 20.0f64..400.0) {
        let s = generate_city(seed, bx(0.0, 0.0, 1000.0, 1000.0), &CityParams::default()).unwrap();
        let c = bx(500.0 + dx - half, 500.0 + dy - half, 500.0 + dx + half, 500.0 + dy + half);
        let cut = cartogan_core_clip(&s, &c);
        prop_assert!(cut.validate().is_ok(), "{:?}", cut.validate());
        for f in &cut.features {
            for p in f.geometry.vertices() {
                prop_assert!(c.contains(*p));
            }
        }
    }
}

fn cartogan_core_clip(s: &VectorScene, c: &GeoBounds) -> VectorScene {
    let features = s
        .features
        .iter()
        .flat_map(|f| -> Vec<VectorFeature> {
            match &f.geometry {
                Geometry::Point(p) => {
                    if c.contains(*p) { vec![f.clone()] } else { vec![] }
                }
                Geometry::Polyline(v) => clip_polyline(v, c)
                    .into_iter()
                    .map(|piece| VectorFeature { id: f.id, class: f.class, geometry: Geometry::Polyline(piece) })
                    .collect(),
                Geometry::Polygon(v) => clip_polygon(v, c)
                    .map(|r| VectorFeature { id: f.id, class: f.class, geometry: Geometry::Polygon(r) })
                    .into_iter()
                    .collect(),
            }
        })
        .collect();
    VectorScene { bounds: *c, seed: s.seed, features }
}

#[test]
fn parser_survives_garbage() {
    for text in ["scene", "scene v1", "scene v1 1 0 0 1 1\n0 POI point 99999999999999999999 0 0", "scene v1 1 0 0 1 1\n0 POI point 1 1e999 0"] {
        assert!(parse_scene(text).is_err());
    }
}
