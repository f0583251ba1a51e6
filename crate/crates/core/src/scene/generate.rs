use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{quantize, quantize_point, FeatureClass, Geometry, VectorFeature, VectorScene};
use crate::error::{Error, Result};
use crate::geo::{GeoBounds, MercatorPoint};
use crate::rng::{derive, tag};

/// Target side of one building lot, meters.
pub const LOT_SIZE: f64 = 22.0;
/// Clearance between the road band and the usable block interior, as a
/// fraction of the block spacing.
pub const SETBACK_FRACTION: f64 = 0.06;
pub const MAX_JITTER: f64 = 0.25;
pub const MAX_POI_DENSITY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityParams {
    /// Nominal street spacing, meters.
    pub block_size: f64,
    /// Node displacement as a fraction of the spacing, `[0, 0.25]`.
    pub road_jitter: f64,
    /// Probability that a lot carries a building.
    pub building_density: f64,
    pub park_probability: f64,
    pub water_probability: f64,
    /// Mean number of POIs per building, `[0, 4]`.
    pub poi_density: f64,
}

impl Default for CityParams {
    fn default() -> Self {
        CityParams {
            block_size: 120.0,
            road_jitter: 0.1,
            building_density: 0.7,
            park_probability: 0.08,
            water_probability: 0.05,
            poi_density: 0.3,
        }
    }
}

impl CityParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Params(what.to_string()));
        if !(self.block_size.is_finite() && self.block_size > 0.0) {
            return bad("block_size must be positive");
        }
        if !(0.0..=MAX_JITTER).contains(&self.road_jitter) {
            return bad("road_jitter must lie in [0, 0.25]");
        }
        for (name, p) in [
            ("building_density", self.building_density),
            ("park_probability", self.park_probability),
            ("water_probability", self.water_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Params(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..=MAX_POI_DENSITY).contains(&self.poi_density) {
            return bad("poi_density must lie in [0, 4]");
        }
        Ok(())
    }
}

/// Lots along one side of a block interior `inner` meters long.
pub fn lots_per_side(inner: f64) -> usize {
    ((inner / LOT_SIZE).floor() as usize).max(1)
}

/// Nearest millimeter-grid value to `v` that lies within `[lo, hi]`.
fn on_grid_within(v: f64, lo: f64, hi: f64) -> f64 {
    let lo = (lo * 1000.0).ceil() / 1000.0;
    let hi = (hi * 1000.0).floor() / 1000.0;
    quantize(v).clamp(lo, hi)
}

fn road_class(index: usize) -> FeatureClass {
    if index % 4 == 0 {
        FeatureClass::RoadPrimary
    } else if index % 2 == 0 {
        FeatureClass::RoadSecondary
    } else {
        FeatureClass::RoadResidential
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<MercatorPoint> {
    [(x0, y0), (x1, y0), (x1, y1), (x0, y1)].into_iter().map(|(x, y)| quantize_point(MercatorPoint::new(x, y))).collect()
}

/// Jittered street grid over `bounds`. Streets run along `nx + 1` vertical
/// and `ny + 1` horizontal grid lines, where `nx = round(width /
/// block_size)`; blocks hold water, grass, or a grid of building lots.
/// All output lies within `bounds` on the millimeter grid.
pub fn generate_city(seed: u64, bounds: GeoBounds, params: &CityParams) -> Result<VectorScene> {
    params.validate()?;
    let (w, h) = (bounds.width(), bounds.height());
    if !(w.is_finite() && h.is_finite()) || w < params.block_size || h < params.block_size {
        return Err(Error::Domain(format!(
            "bounds {w:.3} x {h:.3} m smaller than one {} m block",
            params.block_size
        )));
    }
    let nx = ((w / params.block_size).round() as usize).max(1);
    let ny = ((h / params.block_size).round() as usize).max(1);
    let sx = w / nx as f64;
    let sy = h / ny as f64;
    let spacing = sx.min(sy);
    let jitter = params.road_jitter * spacing;
    let setback = SETBACK_FRACTION * spacing;

    let base_x = |i: usize| if i == nx { bounds.max.x } else { bounds.min.x + i as f64 * sx };
    let base_y = |j: usize| if j == ny { bounds.max.y } else { bounds.min.y + j as f64 * sy };

    let mut nodes = vec![MercatorPoint::default(); (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let mut rng = derive(seed, &[tag::NODE, i as u64, j as u64]);
            let dx = rng.random_range(-1.0..=1.0) * jitter;
            let dy = rng.random_range(-1.0..=1.0) * jitter;
            nodes[j * (nx + 1) + i] = MercatorPoint::new(
                on_grid_within(base_x(i) + dx, bounds.min.x, bounds.max.x),
                on_grid_within(base_y(j) + dy, bounds.min.y, bounds.max.y),
            );
        }
    }
    let node = |i: usize, j: usize| nodes[j * (nx + 1) + i];

    let mut out: Vec<(FeatureClass, Geometry)> = Vec::new();
    for j in 0..=ny {
        out.push((road_class(j), Geometry::Polyline((0..=nx).map(|i| node(i, j)).collect())));
    }
    for i in 0..=nx {
        out.push((road_class(i), Geometry::Polyline((0..=ny).map(|j| node(i, j)).collect())));
    }

    let mut pois = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let x0 = base_x(i) + jitter + setback;
            let x1 = base_x(i + 1) - jitter - setback;
            let y0 = base_y(j) + jitter + setback;
            let y1 = base_y(j + 1) - jitter - setback;
            if x1 <= x0 || y1 <= y0 {
                continue;
            }
            let mut rng = derive(seed, &[tag::BLOCK, i as u64, j as u64]);
            if rng.random::<f64>() < params.water_probability {
                out.push((FeatureClass::Water, Geometry::Polygon(blob(x0, y0, x1, y1, &mut rng))));
                continue;
            }
            if rng.random::<f64>() < params.park_probability {
                out.push((FeatureClass::Grass, Geometry::Polygon(rect(x0, y0, x1, y1))));
                continue;
            }
            let kx = lots_per_side(x1 - x0);
            let ky = lots_per_side(y1 - y0);
            let lw = (x1 - x0) / kx as f64;
            let lh = (y1 - y0) / ky as f64;
            for b in 0..ky {
                for a in 0..kx {
                    if rng.random::<f64>() >= params.building_density {
                        continue;
                    }
                    let lx = x0 + a as f64 * lw;
                    let ly = y0 + b as f64 * lh;
                    let ix = lw * rng.random_range(0.08..0.22);
                    let iy = lh * rng.random_range(0.08..0.22);
                    let ring = rect(lx + ix, ly + iy, lx + lw - ix, ly + lh - iy);
                    let c = MercatorPoint::new(lx + lw / 2.0, ly + lh / 2.0);
                    let whole = params.poi_density.floor();
                    let count = whole as usize + usize::from(rng.random::<f64>() < params.poi_density - whole);
                    for _ in 0..count {
                        let ox = rng.random_range(-0.3..=0.3) * (lw / 2.0 - ix);
                        let oy = rng.random_range(-0.3..=0.3) * (lh / 2.0 - iy);
                        pois.push(quantize_point(MercatorPoint::new(c.x + ox, c.y + oy)));
                    }
                    out.push((FeatureClass::Building, Geometry::Polygon(ring)));
                }
            }
        }
    }
    out.extend(pois.into_iter().map(|p| (FeatureClass::Poi, Geometry::Point(p))));

    let features = out
        .into_iter()
        .enumerate()
        .map(|(id, (class, geometry))| VectorFeature { id: id as u64, class, geometry })
        .collect();
    Ok(VectorScene { bounds, seed, features })
}

/// Star-shaped octagon inside the box; angles increase so the ring is
/// simple and counter-clockwise.
fn blob<R: Rng>(x0: f64, y0: f64, x1: f64, y1: f64, rng: &mut R) -> Vec<MercatorPoint> {
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (rx, ry) = ((x1 - x0) / 2.0, (y1 - y0) / 2.0);
    (0..8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::FRAC_PI_4;
            let r = rng.random_range(0.7..=1.0);
            quantize_point(MercatorPoint::new(cx + rx * r * a.cos(), cy + ry * r * a.sin()))
        })
        .collect()
}
