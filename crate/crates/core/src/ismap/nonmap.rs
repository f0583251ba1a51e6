//! Procedural negatives for the map/non-map classifier: smooth colour
//! noise, gradients and soft blob fields. Photographs are not available
//! offline, so these stand in for them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::render::RasterTile;
use crate::rng::{derive, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Noise,
    Gradient,
    Blobs,
}

impl TextureKind {
    pub const ALL: [TextureKind; 3] = [TextureKind::Noise, TextureKind::Gradient, TextureKind::Blobs];
}

type Rgb = [f64; 3];

fn random_color<R: Rng>(rng: &mut R) -> Rgb {
    [rng.random(), rng.random(), rng.random()]
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Lattice value noise with smoothstep interpolation.
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new<R: Rng>(cells: usize, rng: &mut R) -> Self {
        let lattice = (0..(cells + 1) * (cells + 1)).map(|_| rng.random()).collect();
        ValueNoise { cells, lattice }
    }

    /// `u`, `v` in [0, 1].
    fn at(&self, u: f64, v: f64) -> f64 {
        let n = self.cells;
        let (fx, fy) = (u * n as f64, v * n as f64);
        let (ix, iy) = ((fx as usize).min(n - 1), (fy as usize).min(n - 1));
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (s(fx - ix as f64), s(fy - iy as f64));
        let g = |x: usize, y: usize| self.lattice[y * (n + 1) + x];
        let top = g(ix, iy) + (g(ix + 1, iy) - g(ix, iy)) * tx;
        let bot = g(ix, iy + 1) + (g(ix + 1, iy + 1) - g(ix, iy + 1)) * tx;
        top + (bot - top) * ty
    }
}

fn fbm<R: Rng>(rng: &mut R) -> impl Fn(f64, f64) -> f64 {
    let base = rng.random_range(2..6);
    let octaves: Vec<ValueNoise> = (0..4).map(|o| ValueNoise::new(base << o, rng)).collect();
    move |u, v| {
        let (mut sum, mut amp, mut norm) = (0.0, 1.0, 0.0);
        for oct in &octaves {
            sum += amp * oct.at(u, v);
            norm += amp;
            amp *= 0.5;
        }
        sum / norm
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8
}

pub fn texture(kind: TextureKind, size: u32, rng: &mut impl Rng) -> Result<RasterTile> {
    let n = size as usize;
    let shade: Box<dyn Fn(f64, f64) -> Rgb> = match kind {
        TextureKind::Noise => {
            let (a, b, c) = (random_color(rng), random_color(rng), random_color(rng));
            let f = fbm(rng);
            Box::new(move |u, v| {
                let t = f(u, v);
                if t < 0.5 { lerp(a, b, 2.0 * t) } else { lerp(b, c, 2.0 * t - 1.0) }
            })
        }
        TextureKind::Gradient => {
            let (a, b) = (random_color(rng), random_color(rng));
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (angle.cos(), angle.sin());
            let grain = fbm(rng);
            Box::new(move |u, v| {
                let t = (0.5 + (u - 0.5) * dx + (v - 0.5) * dy).clamp(0.0, 1.0);
                let g = 0.15 * (grain(u, v) - 0.5);
                lerp(a, b, t).map(|ch| ch + g)
            })
        }
        TextureKind::Blobs => {
            let bg = random_color(rng);
            let blobs: Vec<(f64, f64, f64, Rgb)> = (0..rng.random_range(3..9))
                .map(|_| (rng.random(), rng.random(), rng.random_range(0.08..0.35), random_color(rng)))
                .collect();
            Box::new(move |u, v| {
                blobs.iter().fold(bg, |acc, &(cx, cy, r, col)| {
                    let d2 = ((u - cx).powi(2) + (v - cy).powi(2)) / (r * r);
                    lerp(acc, col, (-d2).exp())
                })
            })
        }
    };
    let mut px = Vec::with_capacity(n * n * 3);
    for row in 0..n {
        for col in 0..n {
            let c = shade((col as f64 + 0.5) / n as f64, (row as f64 + 0.5) / n as f64);
            px.extend(c.map(to_byte));
        }
    }
    RasterTile::from_rgb(size, size, px)
}

/// `count` textures cycling through the kinds; item `i` depends only on
/// `(seed, i)`.
pub fn nonmap_set(seed: u64, count: usize, size: u32) -> Result<Vec<RasterTile>> {
    (0..count)
        .map(|i| {
            let kind = TextureKind::ALL[i % TextureKind::ALL.len()];
            texture(kind, size, &mut derive(seed, &[tag::NONMAP, i as u64]))
        })
        .collect()
}
