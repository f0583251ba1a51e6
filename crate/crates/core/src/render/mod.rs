//! Stylesheet-driven rasterization of vector scenes into tiles.

mod raster;
mod style;

pub use raster::*;
pub use style::*;

use crate::geo::{project_to_pixels, tile_bounds, tile_size_meters, GeoBounds, TileCoord};
use crate::scene::{FeatureClass, Geometry, VectorScene};

/// Render target that also records, per pixel, the class painted last.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub classes: Vec<Option<FeatureClass>>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, background: Rgba) -> Self {
        let n = (width * height) as usize;
        Canvas {
            width,
            height,
            rgb: [background.r, background.g, background.b].repeat(n),
            classes: vec![None; n],
        }
    }

    fn paint(&mut self, coverage: &[usize], color: Rgba, class: FeatureClass) {
        if color.a == 0 {
            return;
        }
        for &i in coverage {
            let px = &mut self.rgb[i * 3..i * 3 + 3];
            let out = composite_rgb(color, [px[0], px[1], px[2]]);
            px.copy_from_slice(&out);
            self.classes[i] = Some(class);
        }
    }

    pub fn class_count(&self, class: FeatureClass) -> usize {
        self.classes.iter().filter(|c| **c == Some(class)).count()
    }
}

/// Renders the part of `scene` inside `bounds` onto a `width`×`height`
/// canvas using the rules for zoom `z`. Geometry is cut with a margin wider
/// than any mark, so adjacent regions agree along shared edges.
pub fn render_region(scene: &VectorScene, bounds: &GeoBounds, z: u8, sheet: &StyleSheet, width: u32, height: u32) -> Canvas {
    let mut canvas = Canvas::new(width, height, sheet.background);
    let mpp = bounds.width() / width as f64;
    let margin = (sheet.reach(z) + 2.0) * mpp;
    let cut = crate::scene::clip::clip_to_bounds(scene, &bounds.expand(margin));
    let px = |p: &crate::geo::MercatorPoint| -> (f64, f64) {
        if width == height {
            return project_to_pixels(*p, bounds, width);
        }
        ((p.x - bounds.min.x) / bounds.width() * width as f64, (bounds.max.y - p.y) / bounds.height() * height as f64)
    };
    for class in sheet.visible_classes(z) {
        let style = sheet.style(class);
        let feats: Vec<_> = cut.features.iter().filter(|f| f.class == class).collect();
        let stroke = style.stroke_width.at(z);
        match class.kind() {
            crate::scene::GeometryKind::Polyline => {
                let lines: Vec<Vec<(f64, f64)>> = feats.iter().map(|f| f.geometry.vertices().iter().map(px).collect()).collect();
                if style.casing_width > 0.0 && stroke > 0.0 {
                    for l in &lines {
                        let cov = polyline_coverage(l, stroke + 2.0 * style.casing_width, width, height);
                        canvas.paint(&cov, style.casing, class);
                    }
                }
                for l in &lines {
                    let cov = polyline_coverage(l, stroke, width, height);
                    canvas.paint(&cov, style.stroke, class);
                }
            }
            crate::scene::GeometryKind::Polygon => {
                for f in &feats {
                    let ring: Vec<(f64, f64)> = f.geometry.vertices().iter().map(px).collect();
                    let cov = polygon_coverage(&ring, width, height);
                    canvas.paint(&cov, style.fill, class);
                    if stroke > 0.0 {
                        let mut closed = ring.clone();
                        closed.push(ring[0]);
                        let cov = polyline_coverage(&closed, stroke, width, height);
                        canvas.paint(&cov, style.stroke, class);
                    }
                }
            }
            crate::scene::GeometryKind::Point => {
                let pts: Vec<(u64, (f64, f64))> = feats
                    .iter()
                    .filter_map(|f| match &f.geometry {
                        Geometry::Point(p) => Some((f.id, px(p))),
                        _ => None,
                    })
                    .collect();
                let marks = if sheet.typify.enabled {
                    typify_pois(&pts, sheet.typify.cluster_radius, sheet.typify.min_cluster_size)
                } else {
                    pts.iter().map(|p| p.1).collect()
                };
                let marker = style.marker.unwrap_or(Marker { shape: MarkerShape::Circle, radius: 1.0, color: style.fill });
                for m in marks {
                    let cov = marker_coverage(m, &marker, width, height);
                    canvas.paint(&cov, marker.color, class);
                }
            }
        }
    }
    canvas
}

pub fn render_tile_canvas(scene: &VectorScene, t: TileCoord, sheet: &StyleSheet, size: u32) -> crate::Result<Canvas> {
    // Validates the size before doing any work.
    RasterTile::new(size, sheet.background)?;
    debug_assert!((tile_bounds(t).width() - tile_size_meters(t.z())).abs() < 1e-6);
    Ok(render_region(scene, &tile_bounds(t), t.z(), sheet, size, size))
}

pub fn render_tile(scene: &VectorScene, t: TileCoord, sheet: &StyleSheet, size: u32) -> crate::Result<RasterTile> {
    let c = render_tile_canvas(scene, t, sheet, size)?;
    RasterTile::from_rgb(size, size, c.rgb)
}
