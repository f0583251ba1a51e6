use super::{Geometry, VectorFeature, VectorScene};
use crate::geo::{tile_bounds, GeoBounds, MercatorPoint, TileCoord};

/// Shoelace area; positive for counter-clockwise rings (y up).
pub fn signed_area(ring: &[MercatorPoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

#[derive(Clone, Copy)]
enum Edge {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Edge {
    fn inside(self, p: MercatorPoint) -> bool {
        match self {
            Edge::Left(v) => p.x >= v,
            Edge::Right(v) => p.x <= v,
            Edge::Bottom(v) => p.y >= v,
            Edge::Top(v) => p.y <= v,
        }
    }

    /// Crossing of segment `a`→`b` with this edge's line. The coordinate on
    /// the edge is pinned exactly.
    fn cross(self, a: MercatorPoint, b: MercatorPoint) -> MercatorPoint {
        match self {
            Edge::Left(v) | Edge::Right(v) => {
                let t = (v - a.x) / (b.x - a.x);
                MercatorPoint::new(v, a.y + t * (b.y - a.y))
            }
            Edge::Bottom(v) | Edge::Top(v) => {
                let t = (v - a.y) / (b.y - a.y);
                MercatorPoint::new(a.x + t * (b.x - a.x), v)
            }
        }
    }
}

/// Sutherland–Hodgman against an axis-aligned box. Returns `None` when the
/// result has fewer than 3 distinct vertices or no positive area.
pub fn clip_polygon(ring: &[MercatorPoint], b: &GeoBounds) -> Option<Vec<MercatorPoint>> {
    let edges = [Edge::Left(b.min.x), Edge::Right(b.max.x), Edge::Bottom(b.min.y), Edge::Top(b.max.y)];
    let mut out: Vec<MercatorPoint> = ring.to_vec();
    for edge in edges {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let mut s = *input.last().unwrap();
        for &e in &input {
            match (edge.inside(e), edge.inside(s)) {
                (true, true) => out.push(e),
                (true, false) => {
                    out.push(edge.cross(s, e));
                    out.push(e);
                }
                (false, true) => out.push(edge.cross(s, e)),
                (false, false) => {}
            }
            s = e;
        }
    }
    out.dedup();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    (out.len() >= 3 && signed_area(&out) > 0.0).then_some(out)
}

/// Liang–Barsky parameter interval of segment `a`→`b` inside `bx`.
fn liang_barsky(a: MercatorPoint, b: MercatorPoint, bx: &GeoBounds) -> Option<(f64, f64)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.x - bx.min.x), (dx, bx.max.x - a.x), (-dy, a.y - bx.min.y), (dy, bx.max.y - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

fn lerp(a: MercatorPoint, b: MercatorPoint, t: f64, bx: &GeoBounds) -> MercatorPoint {
    if t == 0.0 {
        return a;
    }
    if t == 1.0 {
        return b;
    }
    let p = MercatorPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
    // Rounding may leave the crossing a hair outside the box.
    MercatorPoint::new(p.x.clamp(bx.min.x, bx.max.x), p.y.clamp(bx.min.y, bx.max.y))
}

/// Clips a polyline to a box; may split it into several pieces. Pieces of
/// zero length are dropped.
pub fn clip_polyline(line: &[MercatorPoint], bx: &GeoBounds) -> Vec<Vec<MercatorPoint>> {
    fn flush(current: &mut Vec<MercatorPoint>, pieces: &mut Vec<Vec<MercatorPoint>>) {
        if current.len() >= 2 {
            pieces.push(std::mem::take(current));
        }
        current.clear();
    }
    let mut pieces = Vec::new();
    let mut current: Vec<MercatorPoint> = Vec::new();
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let Some((t0, t1)) = liang_barsky(a, b, bx) else {
            flush(&mut current, &mut pieces);
            continue;
        };
        let p = lerp(a, b, t0, bx);
        let q = lerp(a, b, t1, bx);
        if current.last() != Some(&p) {
            flush(&mut current, &mut pieces);
            current.push(p);
        }
        if current.last() != Some(&q) {
            current.push(q);
        }
        if t1 < 1.0 {
            flush(&mut current, &mut pieces);
        }
    }
    flush(&mut current, &mut pieces);
    pieces
}

fn bbox_of(v: &[MercatorPoint]) -> GeoBounds {
    GeoBounds::enclosing(v.iter().copied()).expect("geometry has vertices")
}

/// Cuts the part of `scene` covering `tile_bounds(t)` grown by `margin`
/// meters. Ids carry over; a polyline leaving and re-entering the box
/// yields several features sharing one id.
pub fn clip_scene(scene: &VectorScene, t: TileCoord, margin: f64) -> VectorScene {
    let bx = tile_bounds(t).expand(margin.max(0.0));
    clip_to_bounds(scene, &bx)
}

pub(crate) fn clip_to_bounds(scene: &VectorScene, bx: &GeoBounds) -> VectorScene {
    let mut features = Vec::new();
    for f in &scene.features {
        let v = f.geometry.vertices();
        if !bbox_of(v).intersects(bx) {
            continue;
        }
        match &f.geometry {
            Geometry::Point(p) => {
                if bx.contains(*p) {
                    features.push(f.clone());
                }
            }
            Geometry::Polyline(line) => {
                for piece in clip_polyline(line, bx) {
                    features.push(VectorFeature { id: f.id, class: f.class, geometry: Geometry::Polyline(piece) });
                }
            }
            Geometry::Polygon(ring) => {
                if let Some(r) = clip_polygon(ring, bx) {
                    features.push(VectorFeature { id: f.id, class: f.class, geometry: Geometry::Polygon(r) });
                }
            }
        }
    }
    VectorScene { bounds: *bx, seed: scene.seed, features }
}
