use std::fmt::Write as _;

use super::{FeatureClass, Geometry, GeometryKind, VectorFeature, VectorScene};
use crate::error::{Error, Result};
use crate::geo::{GeoBounds, MercatorPoint};

const MAGIC: &str = "scene";
const VERSION: &str = "v1";
/// Hard cap on vertices per feature; keeps hostile input from reserving
/// huge buffers.
const MAX_VERTICES: usize = 1 << 20;

/// Header bounds use the shortest round-trip float form; feature
/// coordinates are fixed at 3 decimals.
pub fn serialize_scene(scene: &VectorScene) -> String {
    let b = &scene.bounds;
    let mut out = format!("{MAGIC} {VERSION} {} {} {} {} {}\n", scene.seed, b.min.x, b.min.y, b.max.x, b.max.y);
    for f in &scene.features {
        let v = f.geometry.vertices();
        let _ = write!(out, "{} {} {} {}", f.id, f.class, f.geometry.kind().name(), v.len());
        for p in v {
            let _ = write!(out, " {:.3} {:.3}", p.x, p.y);
        }
        out.push('\n');
    }
    out
}

fn err(line: usize, reason: impl Into<String>) -> Error {
    Error::SceneParse { line, reason: reason.into() }
}

fn number(line: usize, tok: Option<&str>, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(err(line, format!("bad {what} {tok:?}"))),
    }
}

fn integer<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    if !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(line, format!("bad {what} {tok:?}")));
    }
    tok.parse().map_err(|_| err(line, format!("bad {what} {tok:?}")))
}

fn parse_header(line: usize, text: &str) -> Result<(u64, GeoBounds)> {
    let mut t = text.split_ascii_whitespace();
    if t.next() != Some(MAGIC) {
        return Err(err(line, "expected `scene` header"));
    }
    match t.next() {
        Some(VERSION) => {}
        Some(v) => return Err(err(line, format!("unsupported version {v:?}"))),
        None => return Err(err(line, "missing version")),
    }
    let seed = integer(line, t.next(), "seed")?;
    let minx = number(line, t.next(), "min x")?;
    let miny = number(line, t.next(), "min y")?;
    let maxx = number(line, t.next(), "max x")?;
    let maxy = number(line, t.next(), "max y")?;
    if t.next().is_some() {
        return Err(err(line, "trailing tokens in header"));
    }
    let bounds = GeoBounds::new(MercatorPoint::new(minx, miny), MercatorPoint::new(maxx, maxy))
        .map_err(|e| err(line, e.to_string()))?;
    Ok((seed, bounds))
}

fn parse_feature(line: usize, text: &str, bounds: &GeoBounds) -> Result<VectorFeature> {
    let mut t = text.split_ascii_whitespace();
    let id = integer(line, t.next(), "feature id")?;
    let class_tok = t.next().ok_or_else(|| err(line, "missing class"))?;
    let class: FeatureClass = class_tok.parse().map_err(|_| err(line, format!("unknown class {class_tok:?}")))?;
    let kind_tok = t.next().ok_or_else(|| err(line, "missing geometry kind"))?;
    let kind = [GeometryKind::Point, GeometryKind::Polyline, GeometryKind::Polygon]
        .into_iter()
        .find(|k| k.name() == kind_tok)
        .ok_or_else(|| err(line, format!("unknown geometry kind {kind_tok:?}")))?;
    if kind != class.kind() {
        return Err(err(line, format!("{class} requires {} geometry, got {kind_tok}", class.kind().name())));
    }
    let n: usize = integer(line, t.next(), "vertex count")?;
    if n < kind.min_vertices() || (kind == GeometryKind::Point && n != 1) {
        return Err(err(line, format!("{kind_tok} with {n} vertices")));
    }
    if n > MAX_VERTICES {
        return Err(err(line, format!("{n} vertices exceeds the limit")));
    }
    let slack = bounds.expand(1e-3);
    let mut v = Vec::with_capacity(n.min(1024));
    for k in 0..n {
        let x = number(line, t.next(), &format!("x of vertex {k}"))?;
        let y = number(line, t.next(), &format!("y of vertex {k}"))?;
        let p = MercatorPoint::new(x, y);
        if !slack.contains(p) {
            return Err(err(line, format!("vertex {k} ({x}, {y}) outside scene bounds")));
        }
        v.push(p);
    }
    if t.next().is_some() {
        return Err(err(line, format!("more coordinates than the declared {n} vertices")));
    }
    let geometry = match kind {
        GeometryKind::Point => Geometry::Point(v[0]),
        GeometryKind::Polyline => Geometry::Polyline(v),
        GeometryKind::Polygon => {
            if super::signed_area(&v) <= 0.0 {
                return Err(err(line, "polygon ring must be counter-clockwise"));
            }
            Geometry::Polygon(v)
        }
    };
    Ok(VectorFeature { id, class, geometry })
}

/// Blank lines and lines starting with `#` are skipped. Errors carry the
/// 1-based line number.
pub fn parse_scene(text: &str) -> Result<VectorScene> {
    let mut header: Option<(u64, GeoBounds)> = None;
    let mut features = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        match &header {
            None => header = Some(parse_header(line, body)?),
            Some((_, bounds)) => features.push(parse_feature(line, body, bounds)?),
        }
    }
    let (seed, bounds) = header.ok_or_else(|| err(text.lines().count().max(1), "missing `scene` header"))?;
    Ok(VectorScene { bounds, seed, features })
}
