//! Spherical Mercator and slippy-map tile pyramid math.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Sphere radius of the web-mercator projection, meters.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Half the side of the projected square: `π·R`.
pub const HALF_WORLD: f64 = std::f64::consts::PI * EARTH_RADIUS;
/// Latitude at which the projection becomes square: `atan(sinh(π))`.
pub const MAX_LATITUDE: f64 = 85.051_128_779_806_59;
pub const MAX_ZOOM: u8 = 20;

const EXTENT_SLACK: f64 = 1e-6;
/// Inputs to the inverse projection may overshoot the extent by this much,
/// meters; values printed to 4 decimals still invert.
const INVERSE_SLACK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Degrees. Latitude must lie within ±[`MAX_LATITUDE`], longitude in
    /// `[-180, 180]`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || lat.abs() > MAX_LATITUDE {
            return Err(Error::Domain(format!("latitude {lat} outside ±{MAX_LATITUDE}")));
        }
        if !lon.is_finite() || lon.abs() > 180.0 {
            return Err(Error::Domain(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// A position on the projected plane, meters.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MercatorPoint {
    pub x: f64,
    pub y: f64,
}

impl MercatorPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        MercatorPoint { x, y }
    }

    pub fn in_world(&self) -> bool {
        self.x.abs() <= HALF_WORLD + EXTENT_SLACK && self.y.abs() <= HALF_WORLD + EXTENT_SLACK
    }
}

/// Axis-aligned box on the projected plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min: MercatorPoint,
    pub max: MercatorPoint,
}

impl GeoBounds {
    pub fn new(min: MercatorPoint, max: MercatorPoint) -> Result<Self> {
        if !(min.x <= max.x && min.y <= max.y) {
            return Err(Error::Domain(format!(
                "bounds min ({}, {}) exceeds max ({}, {})",
                min.x, min.y, max.x, max.y
            )));
        }
        Ok(GeoBounds { min, max })
    }

    pub fn world() -> Self {
        GeoBounds {
            min: MercatorPoint::new(-HALF_WORLD, -HALF_WORLD),
            max: MercatorPoint::new(HALF_WORLD, HALF_WORLD),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> MercatorPoint {
        MercatorPoint::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    /// Closed containment.
    pub fn contains(&self, p: MercatorPoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &GeoBounds) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn expand(&self, margin: f64) -> GeoBounds {
        GeoBounds {
            min: MercatorPoint::new(self.min.x - margin, self.min.y - margin),
            max: MercatorPoint::new(self.max.x + margin, self.max.y + margin),
        }
    }

    pub fn union(&self, other: &GeoBounds) -> GeoBounds {
        GeoBounds {
            min: MercatorPoint::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: MercatorPoint::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    /// Bounding box of a non-empty point set.
    pub fn enclosing(points: impl IntoIterator<Item = MercatorPoint>) -> Option<GeoBounds> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = GeoBounds { min: first, max: first };
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }
}

/// Address of one tile in the pyramid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileCoord {
    z: u8,
    x: u32,
    y: u32,
}

impl TileCoord {
    pub fn new(z: u8, x: u32, y: u32) -> Result<Self> {
        if z > MAX_ZOOM {
            return Err(Error::Tile(format!("zoom {z} above {MAX_ZOOM}")));
        }
        let n = 1u32 << z;
        if x >= n || y >= n {
            return Err(Error::Tile(format!("{z}/{x}/{y}: index outside [0, {n})")));
        }
        Ok(TileCoord { z, x, y })
    }

    pub fn z(&self) -> u8 {
        self.z
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    pub fn y(&self) -> u32 {
        self.y
    }

    pub fn children(&self) -> Result<[TileCoord; 4]> {
        if self.z >= MAX_ZOOM {
            return Err(Error::Tile(format!("{self} has no children above zoom {MAX_ZOOM}")));
        }
        let (z, x, y) = (self.z + 1, self.x * 2, self.y * 2);
        Ok([
            TileCoord { z, x, y },
            TileCoord { z, x: x + 1, y },
            TileCoord { z, x, y: y + 1 },
            TileCoord { z, x: x + 1, y: y + 1 },
        ])
    }

    pub fn parent(&self) -> Result<TileCoord> {
        if self.z == 0 {
            return Err(Error::Tile("the root tile has no parent".into()));
        }
        Ok(TileCoord { z: self.z - 1, x: self.x / 2, y: self.y / 2 })
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.z, self.x, self.y)
    }
}

impl FromStr for TileCoord {
    type Err = Error;

    /// Parses the `z/x/y` form.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('/');
        let mut field = |name: &str| -> Result<&str> {
            parts.next().filter(|p| !p.is_empty()).ok_or_else(|| Error::Tile(format!("{s:?}: missing {name}")))
        };
        let z = field("zoom")?;
        let x = field("x")?;
        let y = field("y")?;
        if parts.next().is_some() {
            return Err(Error::Tile(format!("{s:?}: expected z/x/y")));
        }
        let num = |v: &str| -> Result<u64> {
            if !v.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::Tile(format!("{s:?}: {v:?} is not a tile index")));
            }
            v.parse().map_err(|_| Error::Tile(format!("{s:?}: {v:?} is not a tile index")))
        };
        let (z, x, y) = (num(z)?, num(x)?, num(y)?);
        if z > MAX_ZOOM as u64 || x > u32::MAX as u64 || y > u32::MAX as u64 {
            return Err(Error::Tile(format!("{s:?}: index out of range")));
        }
        TileCoord::new(z as u8, x as u32, y as u32)
    }
}

impl Serialize for TileCoord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TileCoord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn geo_to_mercator(p: GeoPoint) -> MercatorPoint {
    let x = EARTH_RADIUS * p.lon.to_radians();
    let y = EARTH_RADIUS * p.lat.to_radians().tan().asinh();
    MercatorPoint { x, y }
}

pub fn mercator_to_geo(p: MercatorPoint) -> Result<GeoPoint> {
    let lim = HALF_WORLD + INVERSE_SLACK;
    if !p.x.is_finite() || !p.y.is_finite() || p.x.abs() > lim || p.y.abs() > lim {
        return Err(Error::Domain(format!("({}, {}) outside the mercator square", p.x, p.y)));
    }
    let lon = (p.x / EARTH_RADIUS).to_degrees().clamp(-180.0, 180.0);
    let lat = (p.y / EARTH_RADIUS).sinh().atan().to_degrees().clamp(-MAX_LATITUDE, MAX_LATITUDE);
    GeoPoint::new(lat, lon)
}

fn clamp_index(v: f64, n: u32) -> u32 {
    if v <= 0.0 {
        0
    } else {
        (v as u64).min(n as u64 - 1) as u32
    }
}

pub fn geo_to_tile(p: GeoPoint, z: u8) -> Result<TileCoord> {
    if z > MAX_ZOOM {
        return Err(Error::Tile(format!("zoom {z} above {MAX_ZOOM}")));
    }
    let n = 1u32 << z;
    let scale = n as f64;
    let fx = (p.lon + 180.0) / 360.0 * scale;
    let fy = (1.0 - p.lat.to_radians().tan().asinh() / std::f64::consts::PI) / 2.0 * scale;
    TileCoord::new(z, clamp_index(fx.floor(), n), clamp_index(fy.floor(), n))
}

/// Tile containing a projected point, computed without leaving meters.
pub fn mercator_to_tile(p: MercatorPoint, z: u8) -> Result<TileCoord> {
    if z > MAX_ZOOM {
        return Err(Error::Tile(format!("zoom {z} above {MAX_ZOOM}")));
    }
    if !p.in_world() {
        return Err(Error::Domain(format!("({}, {}) outside the mercator square", p.x, p.y)));
    }
    let n = 1u32 << z;
    let size = tile_size_meters(z);
    let fx = ((p.x + HALF_WORLD) / size).floor();
    let fy = ((HALF_WORLD - p.y) / size).floor();
    TileCoord::new(z, clamp_index(fx, n), clamp_index(fy, n))
}

/// Side of one tile at zoom `z`, meters.
pub fn tile_size_meters(z: u8) -> f64 {
    2.0 * HALF_WORLD / (1u64 << z) as f64
}

/// Mercator extent of a tile. Adjacent tiles share edge coordinates
/// exactly, and the four children of a tile partition it exactly.
pub fn tile_bounds(t: TileCoord) -> GeoBounds {
    let size = tile_size_meters(t.z);
    let x0 = -HALF_WORLD + t.x as f64 * size;
    let x1 = -HALF_WORLD + (t.x as f64 + 1.0) * size;
    let y1 = HALF_WORLD - t.y as f64 * size;
    let y0 = HALF_WORLD - (t.y as f64 + 1.0) * size;
    GeoBounds { min: MercatorPoint::new(x0, y0), max: MercatorPoint::new(x1, y1) }
}

/// Fractional pixel position of `p` inside tile `t`, origin at the
/// north-west corner with y growing downward.
pub fn geo_to_pixel(p: GeoPoint, t: TileCoord, tile_size: u32) -> Result<(f64, f64)> {
    mercator_to_pixel(geo_to_mercator(p), &tile_bounds(t), tile_size)
        .ok_or_else(|| Error::OutOfTile { tile: t.to_string() })
}

/// Like [`geo_to_pixel`] for an arbitrary box; `None` outside it.
/// Points within a floating-point whisker of the edge count as inside.
pub fn mercator_to_pixel(p: MercatorPoint, b: &GeoBounds, size: u32) -> Option<(f64, f64)> {
    let slack = 1e-9 * b.width().max(b.height()) + 1e-6;
    if !b.expand(slack).contains(p) {
        return None;
    }
    let (px, py) = project_to_pixels(p, b, size);
    let s = size as f64;
    Some((px.clamp(0.0, s), py.clamp(0.0, s)))
}

/// Unchecked linear map of `b` onto `[0, size]²`, y flipped.
pub fn project_to_pixels(p: MercatorPoint, b: &GeoBounds, size: u32) -> (f64, f64) {
    let s = size as f64;
    ((p.x - b.min.x) / b.width() * s, (b.max.y - p.y) / b.height() * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_projects_to_origin() {
        let m = geo_to_mercator(GeoPoint::new(0.0, 0.0).unwrap());
        assert_eq!((m.x, m.y), (0.0, 0.0));
        let g = mercator_to_geo(MercatorPoint::new(0.0, 0.0)).unwrap();
        assert_eq!((g.lat(), g.lon()), (0.0, 0.0));
    }

    #[test]
    fn antimeridian_reaches_half_world() {
        let m = geo_to_mercator(GeoPoint::new(0.0, 180.0 - 1e-12).unwrap());
        assert!((m.x - 20_037_508.342_789_244).abs() < 1e-3);
        let g = mercator_to_geo(MercatorPoint::new(20_037_508.3428, 0.0)).unwrap();
        assert!((g.lon() - 180.0).abs() < 1e-8);
    }

    #[test]
    fn square_limit_is_half_world() {
        let m = geo_to_mercator(GeoPoint::new(MAX_LATITUDE, 0.0).unwrap());
        assert!((m.y - HALF_WORLD).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(85.06, 0.0).is_err());
        assert!(GeoPoint::new(-90.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(mercator_to_geo(MercatorPoint::new(2.1e7, 0.0)).is_err());
        assert!(TileCoord::new(21, 0, 0).is_err());
        assert!(TileCoord::new(2, 4, 0).is_err());
    }

    #[test]
    fn madison_tile_at_z15() {
        let p = GeoPoint::new(43.0731, -89.4012).unwrap();
        assert_eq!(geo_to_tile(p, 15).unwrap(), TileCoord::new(15, 8246, 12031).unwrap());
        assert_eq!(mercator_to_tile(geo_to_mercator(p), 15).unwrap(), TileCoord::new(15, 8246, 12031).unwrap());
        let g = mercator_to_geo(geo_to_mercator(p)).unwrap();
        assert!((g.lat() - p.lat()).abs() < 1e-9 && (g.lon() - p.lon()).abs() < 1e-9);
    }

    #[test]
    fn everything_is_in_the_root_tile() {
        for &(lat, lon) in &[(0.0, 0.0), (85.05, -180.0), (-85.05, 179.99), (12.0, 180.0)] {
            let t = geo_to_tile(GeoPoint::new(lat, lon).unwrap(), 0).unwrap();
            assert_eq!(t, TileCoord::new(0, 0, 0).unwrap());
        }
    }

    #[test]
    fn north_west_corner_belongs_to_its_tile() {
        let t = TileCoord::new(10, 300, 400).unwrap();
        let b = tile_bounds(t);
        let nw = MercatorPoint::new(b.min.x, b.max.y);
        assert_eq!(mercator_to_tile(nw, 10).unwrap(), t);
    }

    #[test]
    fn root_bounds_are_world() {
        assert_eq!(tile_bounds(TileCoord::new(0, 0, 0).unwrap()), GeoBounds::world());
        assert!((HALF_WORLD - 20_037_508.342_789_244).abs() < 1e-9);
    }

    #[test]
    fn parent_and_children() {
        let t = TileCoord::new(15, 8246, 12031).unwrap();
        assert_eq!(t.parent().unwrap(), TileCoord::new(14, 4123, 6015).unwrap());
        let root = TileCoord::new(0, 0, 0).unwrap();
        let kids = root.children().unwrap();
        let mut names: Vec<String> = kids.iter().map(|k| k.to_string()).collect();
        names.sort();
        assert_eq!(names, ["1/0/0", "1/0/1", "1/1/0", "1/1/1"]);
        assert!(root.parent().is_err());
        assert!(TileCoord::new(20, 0, 0).unwrap().children().is_err());
    }

    #[test]
    fn pixel_mapping() {
        let t = TileCoord::new(12, 1000, 1500).unwrap();
        let b = tile_bounds(t);
        let nw = mercator_to_geo(MercatorPoint::new(b.min.x, b.max.y)).unwrap();
        let (px, py) = geo_to_pixel(nw, t, 256).unwrap();
        assert!(px.abs() < 1e-6 && py.abs() < 1e-6);
        let c = mercator_to_geo(b.center()).unwrap();
        let (px, py) = geo_to_pixel(c, t, 256).unwrap();
        assert!((px - 128.0).abs() < 0.5 && (py - 128.0).abs() < 0.5);
        let q = mercator_to_geo(MercatorPoint::new(b.min.x + b.width() / 4.0, b.center().y)).unwrap();
        let (px, _) = geo_to_pixel(q, t, 256).unwrap();
        assert!((px - 64.0).abs() < 0.5);
        let outside = mercator_to_geo(MercatorPoint::new(b.max.x + 10.0, b.center().y)).unwrap();
        assert!(matches!(geo_to_pixel(outside, t, 256), Err(Error::OutOfTile { .. })));
    }

    #[test]
    fn tile_coord_text_form() {
        let t: TileCoord = "15/8246/12031".parse().unwrap();
        assert_eq!(t.to_string(), "15/8246/12031");
        for bad in ["", "15/1", "15/1/2/3", "a/1/2", "15/-1/2", "21/0/0", "1/2/0", "15//2", "+1/0/0"] {
            assert!(bad.parse::<TileCoord>().is_err(), "{bad:?}");
        }
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "\"15/8246/12031\"");
        assert_eq!(serde_json::from_str::<TileCoord>(&json).unwrap(), t);
    }
}
