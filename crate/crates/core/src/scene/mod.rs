//! Vector scenes: feature model, procedural city generator, tile clipping
//! and the line-oriented text format.

pub(crate) mod clip;
mod generate;
mod text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use clip::{clip_polygon, clip_polyline, clip_scene, signed_area};
pub use generate::{generate_city, lots_per_side, CityParams};
pub use text::{parse_scene, serialize_scene};

use crate::error::Error;
use crate::geo::{GeoBounds, MercatorPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureClass {
    RoadPrimary,
    RoadSecondary,
    RoadResidential,
    Building,
    Water,
    Grass,
    Poi,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 7] = [
        FeatureClass::RoadPrimary,
        FeatureClass::RoadSecondary,
        FeatureClass::RoadResidential,
        FeatureClass::Building,
        FeatureClass::Water,
        FeatureClass::Grass,
        FeatureClass::Poi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureClass::RoadPrimary => "ROAD_PRIMARY",
            FeatureClass::RoadSecondary => "ROAD_SECONDARY",
            FeatureClass::RoadResidential => "ROAD_RESIDENTIAL",
            FeatureClass::Building => "BUILDING",
            FeatureClass::Water => "WATER",
            FeatureClass::Grass => "GRASS",
            FeatureClass::Poi => "POI",
        }
    }

    pub fn kind(self) -> GeometryKind {
        match self {
            FeatureClass::RoadPrimary | FeatureClass::RoadSecondary | FeatureClass::RoadResidential => {
                GeometryKind::Polyline
            }
            FeatureClass::Building | FeatureClass::Water | FeatureClass::Grass => GeometryKind::Polygon,
            FeatureClass::Poi => GeometryKind::Point,
        }
    }

    pub fn is_road(self) -> bool {
        self.kind() == GeometryKind::Polyline
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        FeatureClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Params(format!("unknown feature class {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryKind {
    Point,
    Polyline,
    Polygon,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Point => "point",
            GeometryKind::Polyline => "line",
            GeometryKind::Polygon => "polygon",
        }
    }

    pub fn min_vertices(self) -> usize {
        match self {
            GeometryKind::Point => 1,
            GeometryKind::Polyline => 2,
            GeometryKind::Polygon => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Point(MercatorPoint),
    Polyline(Vec<MercatorPoint>),
    /// Implicitly closed, counter-clockwise ring.
    Polygon(Vec<MercatorPoint>),
}

impl Geometry {
    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Point(_) => GeometryKind::Point,
            Geometry::Polyline(_) => GeometryKind::Polyline,
            Geometry::Polygon(_) => GeometryKind::Polygon,
        }
    }

    pub fn vertices(&self) -> &[MercatorPoint] {
        match self {
            Geometry::Point(p) => std::slice::from_ref(p),
            Geometry::Polyline(v) | Geometry::Polygon(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFeature {
    pub id: u64,
    pub class: FeatureClass,
    pub geometry: Geometry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorScene {
    pub bounds: GeoBounds,
    pub seed: u64,
    pub features: Vec<VectorFeature>,
}

impl VectorScene {
    pub fn empty(bounds: GeoBounds, seed: u64) -> Self {
        VectorScene { bounds, seed, features: Vec::new() }
    }

    pub fn count(&self, class: FeatureClass) -> usize {
        self.features.iter().filter(|f| f.class == class).count()
    }

    /// Checks class/geometry consistency, vertex counts, finiteness, bounds
    /// containment and ring orientation. Does not check id uniqueness, which
    /// clipping may break.
    pub fn validate(&self) -> Result<(), String> {
        let b = self.bounds.expand(1e-3);
        for f in &self.features {
            let kind = f.geometry.kind();
            if kind != f.class.kind() {
                return Err(format!("feature {}: {} needs {} geometry", f.id, f.class, f.class.kind().name()));
            }
            let v = f.geometry.vertices();
            if v.len() < kind.min_vertices() {
                return Err(format!("feature {}: {} vertices", f.id, v.len()));
            }
            if let Some(p) = v.iter().find(|p| !p.x.is_finite() || !p.y.is_finite() || !b.contains(**p)) {
                return Err(format!("feature {}: vertex ({}, {}) outside bounds", f.id, p.x, p.y));
            }
            if kind == GeometryKind::Polygon && signed_area(v) <= 0.0 {
                return Err(format!("feature {}: ring is not counter-clockwise", f.id));
            }
        }
        Ok(())
    }
}

/// Rounds to the millimeter grid used by the text format. Coordinates on
/// this grid survive a serialize/parse cycle bit-exactly.
pub fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0 + 0.0
}

pub fn quantize_point(p: MercatorPoint) -> MercatorPoint {
    MercatorPoint::new(quantize(p.x), quantize(p.y))
}
