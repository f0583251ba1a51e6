use serde::{Deserialize, Serialize};

use super::raster::{Marker, MarkerShape, Rgba};
use crate::error::{Error, Result};
use crate::scene::FeatureClass;

/// Step function from zoom to a pixel width: the entry with the greatest
/// zoom not above the query wins; zooms below the first entry use it too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoomWidths(pub Vec<(u8, f64)>);

impl ZoomWidths {
    pub fn uniform(w: f64) -> Self {
        ZoomWidths(vec![(0, w)])
    }

    pub fn at(&self, z: u8) -> f64 {
        let mut w = self.0.first().map_or(0.0, |e| e.1);
        for &(from, v) in &self.0 {
            if from <= z {
                w = v;
            }
        }
        w
    }

    pub fn max(&self) -> f64 {
        self.0.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassStyle {
    pub fill: Rgba,
    pub stroke: Rgba,
    pub stroke_width: ZoomWidths,
    /// The class is dropped below this zoom.
    pub min_zoom: u8,
    /// Extra pixels painted on each side of a road in `casing`.
    pub casing_width: f64,
    pub casing: Rgba,
    pub marker: Option<Marker>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Typify {
    pub enabled: bool,
    pub cluster_radius: f64,
    pub min_cluster_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleSheet {
    pub id: String,
    pub background: Rgba,
    /// Indexed by [`FeatureClass::index`].
    pub classes: Vec<ClassStyle>,
    pub draw_order: Vec<FeatureClass>,
    pub typify: Typify,
}

impl StyleSheet {
    pub fn style(&self, class: FeatureClass) -> &ClassStyle {
        &self.classes[class.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() != FeatureClass::ALL.len() {
            return Err(Error::Params(format!("sheet {}: {} class styles, expected 7", self.id, self.classes.len())));
        }
        for c in FeatureClass::ALL {
            let n = self.draw_order.iter().filter(|&&d| d == c).count();
            if n != 1 {
                return Err(Error::Params(format!("sheet {}: {c} appears {n} times in draw order", self.id)));
            }
        }
        if self.draw_order.len() != FeatureClass::ALL.len() {
            return Err(Error::Params(format!("sheet {}: draw order has {} entries", self.id, self.draw_order.len())));
        }
        for (c, s) in FeatureClass::ALL.iter().zip(&self.classes) {
            if s.min_zoom > crate::geo::MAX_ZOOM {
                return Err(Error::Params(format!("sheet {}: {c} min_zoom {} above 20", self.id, s.min_zoom)));
            }
            let widths = s.stroke_width.0.iter().map(|e| e.1);
            if widths.chain([s.casing_width]).any(|w| !(w.is_finite() && w >= 0.0)) {
                return Err(Error::Params(format!("sheet {}: {c} has a negative width", self.id)));
            }
            if let Some(m) = &s.marker {
                if !(m.radius.is_finite() && m.radius >= 0.0) {
                    return Err(Error::Params(format!("sheet {}: {c} marker radius", self.id)));
                }
            }
        }
        Ok(())
    }

    /// Upper bound on how far any mark reaches from its geometry, pixels.
    pub fn reach(&self, z: u8) -> f64 {
        let mut r: f64 = 0.0;
        for s in &self.classes {
            r = r.max(s.stroke_width.at(z) / 2.0 + s.casing_width);
            if let Some(m) = &s.marker {
                r = r.max(2.5 * m.radius);
            }
        }
        r
    }

    /// Every class that paints at zoom `z`.
    pub fn visible_classes(&self, z: u8) -> Vec<FeatureClass> {
        self.draw_order.iter().copied().filter(|c| z >= self.style(*c).min_zoom).collect()
    }

    /// All colors a renderer may composite with this sheet.
    pub fn palette(&self) -> Vec<Rgba> {
        let mut p = Vec::new();
        for s in &self.classes {
            p.extend([s.fill, s.stroke, s.casing]);
            if let Some(m) = &s.marker {
                p.push(m.color);
            }
        }
        p.retain(|c| c.a > 0);
        p.sort_by_key(|c| (c.r, c.g, c.b, c.a));
        p.dedup();
        p
    }
}

pub const SIMPLE_SHEET_ID: &str = "simple-v1";
pub const TARGET_SHEET_ID: &str = "target-v1";

const DRAW_ORDER: [FeatureClass; 7] = [
    FeatureClass::Grass,
    FeatureClass::Water,
    FeatureClass::Building,
    FeatureClass::RoadResidential,
    FeatureClass::RoadSecondary,
    FeatureClass::RoadPrimary,
    FeatureClass::Poi,
];

fn flat(fill: Rgba, width: ZoomWidths, min_zoom: u8) -> ClassStyle {
    ClassStyle { fill, stroke: fill, stroke_width: width, min_zoom, casing_width: 0.0, casing: Rgba::TRANSPARENT, marker: None }
}

/// Raw-data look: one saturated hue per class at alpha 230, 1 px strokes,
/// nothing generalized away.
pub fn builtin_simple_sheet() -> StyleSheet {
    let a = 230;
    let one = || ZoomWidths::uniform(1.0);
    let mut poi = flat(Rgba::rgba(0, 0, 0, a), one(), 0);
    poi.marker = Some(Marker { shape: MarkerShape::Circle, radius: 1.5, color: Rgba::rgba(0, 0, 0, a) });
    StyleSheet {
        id: SIMPLE_SHEET_ID.into(),
        background: Rgba::rgb(255, 255, 255),
        classes: vec![
            flat(Rgba::rgba(230, 20, 20, a), one(), 0),
            flat(Rgba::rgba(245, 150, 0, a), one(), 0),
            flat(Rgba::rgba(190, 0, 200, a), one(), 0),
            flat(Rgba::rgba(30, 40, 220, a), one(), 0),
            flat(Rgba::rgba(0, 200, 230, a), one(), 0),
            flat(Rgba::rgba(30, 190, 40, a), one(), 0),
            poi,
        ],
        draw_order: DRAW_ORDER.to_vec(),
        typify: Typify { enabled: false, cluster_radius: 0.0, min_cluster_size: 2 },
    }
}

/// Finished-map look: pale ground, cased roads that widen with rank and
/// zoom, buildings only from z16, clustered POI pins.
pub fn builtin_target_sheet() -> StyleSheet {
    let grey = Rgba::rgb(190, 190, 190);
    let road = |fill: Rgba, widths: Vec<(u8, f64)>| ClassStyle {
        fill,
        stroke: fill,
        stroke_width: ZoomWidths(widths),
        min_zoom: 0,
        casing_width: 1.0,
        casing: grey,
        marker: None,
    };
    let area = |fill: Rgba, stroke: Rgba, min_zoom: u8| ClassStyle {
        fill,
        stroke,
        stroke_width: ZoomWidths(vec![(0, 0.0), (17, 1.0)]),
        min_zoom,
        casing_width: 0.0,
        casing: Rgba::TRANSPARENT,
        marker: None,
    };
    let pin = Rgba::rgb(219, 68, 55);
    StyleSheet {
        id: TARGET_SHEET_ID.into(),
        background: Rgba::rgb(242, 239, 233),
        classes: vec![
            road(Rgba::rgb(255, 235, 161), vec![(0, 2.0), (15, 3.0), (16, 4.0), (17, 5.0), (18, 7.0)]),
            road(Rgba::rgb(255, 255, 255), vec![(0, 1.0), (15, 2.0), (16, 3.0), (17, 4.0), (18, 5.0)]),
            road(Rgba::rgb(255, 255, 255), vec![(0, 1.0), (16, 2.0), (17, 3.0), (18, 4.0)]),
            area(Rgba::rgb(217, 213, 206), Rgba::rgb(196, 191, 183), 16),
            area(Rgba::rgb(170, 211, 223), Rgba::rgb(170, 211, 223), 0),
            area(Rgba::rgb(200, 228, 192), Rgba::rgb(200, 228, 192), 0),
            ClassStyle {
                fill: pin,
                stroke: pin,
                stroke_width: ZoomWidths::uniform(0.0),
                min_zoom: 0,
                casing_width: 0.0,
                casing: Rgba::TRANSPARENT,
                marker: Some(Marker { shape: MarkerShape::Pin, radius: 2.5, color: pin }),
            },
        ],
        draw_order: DRAW_ORDER.to_vec(),
        typify: Typify { enabled: true, cluster_radius: 8.0, min_cluster_size: 2 },
    }
}

pub fn builtin_sheet(id: &str) -> Result<StyleSheet> {
    match id {
        SIMPLE_SHEET_ID => Ok(builtin_simple_sheet()),
        TARGET_SHEET_ID => Ok(builtin_target_sheet()),
        other => Err(Error::Params(format!("unknown stylesheet {other:?}"))),
    }
}
