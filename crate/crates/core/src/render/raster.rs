//! Binary-coverage rasterization primitives. Every primitive first builds a
//! coverage list of pixel indices, so a pixel covered twice by one shape is
//! still composited once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TILE_SIZES: [u32; 3] = [64, 128, 256];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgba {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl Rgba {
    pub const fn rgb(r: u8, g: u8, b: u8) -> Rgba {
        Rgba { r, g, b, a: 255 }
    }

    pub const fn rgba(r: u8, g: u8, b: u8, a: u8) -> Rgba {
        Rgba { r, g, b, a }
    }

    pub const TRANSPARENT: Rgba = Rgba::rgba(0, 0, 0, 0);
}

/// `src` over `dst` with 8-bit coverage `a`: `(src·a + dst·(255−a)) / 255`
/// rounded half up.
pub fn composite(src: u8, dst: u8, a: u8) -> u8 {
    let num = src as u32 * a as u32 + dst as u32 * (255 - a as u32);
    ((2 * num + 255) / 510) as u8
}

pub fn composite_rgb(src: Rgba, dst: [u8; 3]) -> [u8; 3] {
    [composite(src.r, dst[0], src.a), composite(src.g, dst[1], src.a), composite(src.b, dst[2], src.a)]
}

/// Square RGB8 image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterTile {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

fn check_size(width: u32, height: u32) -> Result<()> {
    if width != height || !TILE_SIZES.contains(&width) {
        return Err(Error::Image(format!("unsupported tile size {width}x{height}; expected 64, 128 or 256 square")));
    }
    Ok(())
}

impl RasterTile {
    pub fn new(size: u32, background: Rgba) -> Result<Self> {
        check_size(size, size)?;
        let px = [background.r, background.g, background.b];
        Ok(RasterTile { width: size, height: size, pixels: px.repeat((size * size) as usize) })
    }

    pub fn from_rgb(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_size(width, height)?;
        if pixels.len() != (width * height * 3) as usize {
            return Err(Error::Image(format!("{} bytes for a {width}x{height} RGB image", pixels.len())));
        }
        Ok(RasterTile { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> u32 {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Composites `color` onto every pixel in `coverage` (row-major indices).
    pub fn paint(&mut self, coverage: &[usize], color: Rgba) {
        if color.a == 0 {
            return;
        }
        for &i in coverage {
            let px = &mut self.pixels[i * 3..i * 3 + 3];
            let out = composite_rgb(color, [px[0], px[1], px[2]]);
            px.copy_from_slice(&out);
        }
    }
}

/// Even-odd scanline coverage sampled at pixel centers. A pixel is inside
/// when its center lies in a half-open span `[x_a, x_b)` of the row.
pub fn polygon_coverage(ring: &[(f64, f64)], width: u32, height: u32) -> Vec<usize> {
    let mut out = Vec::new();
    if ring.len() < 3 {
        return out;
    }
    let ymin = ring.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = ring.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let row0 = (ymin - 0.5).ceil().max(0.0) as i64;
    let row1 = ((ymax - 0.5).floor() as i64).min(height as i64 - 1);
    let mut xs: Vec<f64> = Vec::new();
    for row in row0..=row1 {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..ring.len() {
            let (x0, y0) = ring[i];
            let (x1, y1) = ring[(i + 1) % ring.len()];
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                xs.push(x0 + (yc - y0) / (y1 - y0) * (x1 - x0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // Centers c = col + 0.5 with a <= c < b.
            let c0 = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let c1 = ((pair[1] - 0.5).ceil() as i64 - 1).min(width as i64 - 1);
            for col in c0..=c1 {
                out.push(row as usize * width as usize + col as usize);
            }
        }
    }
    out
}

fn segment_distance_sq(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
    qx * qx + qy * qy
}

/// Pixels whose center lies within `line_width / 2` of some segment.
pub fn polyline_coverage(pts: &[(f64, f64)], line_width: f64, width: u32, height: u32) -> Vec<usize> {
    let mut mask = vec![false; (width * height) as usize];
    if line_width <= 0.0 || pts.is_empty() {
        return Vec::new();
    }
    let r = line_width / 2.0;
    let r2 = r * r;
    let segs: Vec<((f64, f64), (f64, f64))> =
        if pts.len() == 1 { vec![(pts[0], pts[0])] } else { pts.windows(2).map(|w| (w[0], w[1])).collect() };
    for (a, b) in segs {
        let x0 = ((a.0.min(b.0) - r - 0.5).floor().max(0.0)) as i64;
        let x1 = ((a.0.max(b.0) + r).ceil() as i64).min(width as i64 - 1);
        let y0 = ((a.1.min(b.1) - r - 0.5).floor().max(0.0)) as i64;
        let y1 = ((a.1.max(b.1) + r).ceil() as i64).min(height as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if segment_distance_sq(x as f64 + 0.5, y as f64 + 0.5, a, b) <= r2 {
                    mask[y as usize * width as usize + x as usize] = true;
                }
            }
        }
    }
    mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerShape {
    Circle,
    Pin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    pub shape: MarkerShape,
    pub radius: f64,
    pub color: Rgba,
}

/// Circle: disc of `radius` around `p`. Pin: a disc one and a half radii
/// above `p` joined to a point at `p`.
pub fn marker_coverage(p: (f64, f64), marker: &Marker, width: u32, height: u32) -> Vec<usize> {
    let r = marker.radius;
    match marker.shape {
        MarkerShape::Circle => polyline_coverage(&[p], 2.0 * r, width, height),
        MarkerShape::Pin => {
            let head = (p.0, p.1 - 1.5 * r);
            let mut cov = polyline_coverage(&[head], 2.0 * r, width, height);
            cov.extend(polygon_coverage(&[(head.0 - 0.7 * r, head.1), (p.0, p.1), (head.0 + 0.7 * r, head.1)], width, height));
            cov.sort_unstable();
            cov.dedup();
            cov
        }
    }
}

pub fn fill_polygon(img: &mut RasterTile, ring: &[(f64, f64)], color: Rgba) {
    let cov = polygon_coverage(ring, img.width, img.height);
    img.paint(&cov, color);
}

pub fn draw_polyline(img: &mut RasterTile, pts: &[(f64, f64)], line_width: f64, color: Rgba) {
    let cov = polyline_coverage(pts, line_width, img.width, img.height);
    img.paint(&cov, color);
}

pub fn draw_marker(img: &mut RasterTile, p: (f64, f64), marker: &Marker) {
    let cov = marker_coverage(p, marker, img.width, img.height);
    img.paint(&cov, marker.color);
}

/// Greedy clustering in pixel space. Points are visited in ascending id;
/// each unassigned point absorbs every unassigned point within `radius` of
/// itself. Clusters of at least `min_size` collapse to their centroid,
/// smaller ones pass through unchanged.
pub fn typify_pois(pois: &[(u64, (f64, f64))], radius: f64, min_size: usize) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..pois.len()).collect();
    order.sort_by_key(|&i| (pois[i].0, i));
    let mut taken = vec![false; pois.len()];
    let r2 = radius * radius;
    let mut out = Vec::new();
    for (k, &seed) in order.iter().enumerate() {
        if taken[seed] {
            continue;
        }
        taken[seed] = true;
        let s = pois[seed].1;
        let mut members = vec![s];
        for &j in &order[k + 1..] {
            let q = pois[j].1;
            if !taken[j] && (q.0 - s.0).powi(2) + (q.1 - s.1).powi(2) <= r2 {
                taken[j] = true;
                members.push(q);
            }
        }
        if members.len() >= min_size.max(1) {
            let n = members.len() as f64;
            out.push((members.iter().map(|m| m.0).sum::<f64>() / n, members.iter().map(|m| m.1).sum::<f64>() / n));
        } else {
            out.extend(members);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositing_endpoints() {
        for v in [0u8, 1, 127, 128, 254, 255] {
            assert_eq!(composite(200, v, 0), v);
            assert_eq!(composite(v, 13, 255), v);
        }
        assert_eq!(composite(255, 0, 128), 128);
        // 100·51/255 = 20 exactly; 1·128/255 = 0.502 rounds up.
        assert_eq!(composite(100, 0, 51), 20);
        assert_eq!(composite(1, 0, 128), 1);
    }

    #[test]
    fn tile_sizes_are_checked() {
        assert!(RasterTile::new(64, Rgba::rgb(1, 2, 3)).is_ok());
        assert!(RasterTile::new(32, Rgba::rgb(1, 2, 3)).is_err());
        assert!(RasterTile::from_rgb(64, 128, vec![0; 64 * 128 * 3]).is_err());
        assert!(RasterTile::from_rgb(64, 64, vec![0; 10]).is_err());
    }

    #[test]
    fn aligned_square_covers_exactly() {
        let mut img = RasterTile::new(64, Rgba::rgb(0, 0, 0)).unwrap();
        fill_polygon(&mut img, &[(10.0, 10.0), (20.0, 10.0), (20.0, 20.0), (10.0, 20.0)], Rgba::rgb(255, 0, 0));
        let painted = img.pixels().chunks(3).filter(|p| p[0] == 255).count();
        assert_eq!(painted, 100);
        assert_eq!(img.get(10, 10), [255, 0, 0]);
        assert_eq!(img.get(19, 19), [255, 0, 0]);
        assert_eq!(img.get(20, 19), [0, 0, 0]);
        assert_eq!(img.get(9, 10), [0, 0, 0]);
    }

    #[test]
    fn even_odd_leaves_a_hole() {
        // Figure-eight style ring wound through itself twice over the center.
        let ring = [(0.0, 0.0), (30.0, 0.0), (30.0, 30.0), (10.0, 30.0), (10.0, 10.0), (20.0, 10.0), (20.0, 20.0), (0.0, 20.0)];
        let cov = polygon_coverage(&ring, 64, 64);
        assert!(!cov.contains(&(15 * 64 + 15)));
        assert!(cov.contains(&(5 * 64 + 5)));
    }

    #[test]
    fn alpha_zero_is_a_no_op() {
        let mut img = RasterTile::new(64, Rgba::rgb(9, 8, 7)).unwrap();
        let before = img.clone();
        fill_polygon(&mut img, &[(0.0, 0.0), (64.0, 0.0), (64.0, 64.0)], Rgba::rgba(255, 0, 0, 0));
        draw_polyline(&mut img, &[(0.0, 0.0), (64.0, 64.0)], 5.0, Rgba::rgba(255, 0, 0, 0));
        assert_eq!(img, before);
    }

    #[test]
    fn off_canvas_shapes_are_skipped() {
        let mut img = RasterTile::new(64, Rgba::rgb(0, 0, 0)).unwrap();
        let before = img.clone();
        fill_polygon(&mut img, &[(-50.0, -50.0), (-10.0, -50.0), (-10.0, -10.0)], Rgba::rgb(255, 0, 0));
        draw_polyline(&mut img, &[(100.0, 100.0), (200.0, 100.0)], 4.0, Rgba::rgb(255, 0, 0));
        draw_marker(&mut img, (-30.0, 10.0), &Marker { shape: MarkerShape::Pin, radius: 3.0, color: Rgba::rgb(1, 1, 1) });
        assert_eq!(img, before);
    }

    #[test]
    fn polyline_self_overlap_composites_once() {
        let mut img = RasterTile::new(64, Rgba::rgb(0, 0, 0)).unwrap();
        draw_polyline(&mut img, &[(5.0, 32.0), (50.0, 32.0), (5.0, 32.0)], 3.0, Rgba::rgba(200, 0, 0, 128));
        assert!(img.pixels().chunks(3).all(|p| p[0] == 0 || p[0] == composite(200, 0, 128)));
    }

    #[test]
    fn typify_basics() {
        assert!(typify_pois(&[], 5.0, 2).is_empty());
        let same = [(3, (4.0, 4.0)), (1, (4.0, 4.0)), (2, (4.0, 4.0))];
        assert_eq!(typify_pois(&same, 1.0, 2), vec![(4.0, 4.0)]);
        let apart = [(0, (0.0, 0.0)), (1, (10.0, 0.0))];
        assert_eq!(typify_pois(&apart, 3.0, 2), vec![(0.0, 0.0), (10.0, 0.0)]);
    }
}
