//! Paired (Pix2Pix) and unpaired (CycleGAN) style transfer.

pub mod loss;
pub mod nets;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cartogan_autograd::{Shape, Tensor};

use crate::error::{Error, Result};
use crate::render::RasterTile;

pub use nets::{Discriminator, Generator};
pub use train::{load_generator, Checkpoint, CheckpointMeta, EpochLosses, TrainData, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pix2Pix,
    CycleGan,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pix2Pix => "pix2pix",
            ModelKind::CycleGan => "cyclegan",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pix2pix" => Ok(ModelKind::Pix2Pix),
            "cyclegan" => Ok(ModelKind::CycleGan),
            _ => Err(Error::Params(format!("unknown model {s:?}; expected pix2pix or cyclegan"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Only 1 is supported.
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub lambda_cyc: f64,
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_interval: usize,
    pub image_size: u32,
    /// Base channel count of the generators.
    pub ngf: usize,
    /// Base channel count of the discriminators.
    pub ndf: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            lambda_l1: 100.0,
            lambda_cyc: 10.0,
            seed: 0,
            checkpoint_interval: 0,
            image_size: 64,
            ngf: 64,
            ndf: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Params(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if self.batch_size != 1 {
            return bad(format!("batch_size {} unsupported; only 1 is implemented", self.batch_size));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite() && self.lambda_cyc >= 0.0 && self.lambda_cyc.is_finite()) {
            return bad("loss weights must be finite and non-negative".into());
        }
        if !crate::render::TILE_SIZES.contains(&self.image_size) {
            return bad(format!("image_size {} unsupported", self.image_size));
        }
        if self.ngf == 0 || self.ndf == 0 {
            return bad("channel counts must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn adam(&self) -> cartogan_autograd::AdamConfig {
        cartogan_autograd::AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: 1e-8 }
    }
}

/// RGB8 tile to a (1, 3, S, S) tensor in `[-1, 1]`.
pub fn tile_to_tensor(tile: &RasterTile) -> Tensor<f32> {
    let s = tile.size() as usize;
    let plane = s * s;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in tile.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, s, s), data).expect("tile shape")
}

/// `round((v + 1)·127.5)` clamped to `[0, 255]`; halves round up.
pub fn denormalize(v: f32) -> u8 {
    let x = (v as f64 + 1.0) * 127.5;
    if x.is_nan() {
        return 0;
    }
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn tensor_to_tile(t: &Tensor<f32>) -> Result<RasterTile> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 || s.h != s.w {
        return Err(Error::Image(format!("cannot convert tensor {s} to a tile")));
    }
    let plane = s.h * s.w;
    let d = t.data();
    let mut px = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            px.push(denormalize(d[c * plane + i]));
        }
    }
    RasterTile::from_rgb(s.w as u32, s.h as u32, px)
}

/// Applies `g` with dropout disabled.
pub fn transfer_tile(g: &Generator<f32>, tile: &RasterTile) -> Result<RasterTile> {
    if tile.size() != g.size() {
        return Err(Error::Params(format!("tile is {} px but the generator expects {} px", tile.size(), g.size())));
    }
    let out = g.infer(&tile_to_tensor(tile))?;
    tensor_to_tile(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Rgba;

    #[test]
    fn denormalize_endpoints() {
        assert_eq!(denormalize(-1.0), 0);
        assert_eq!(denormalize(1.0), 255);
        assert_eq!(denormalize(0.0), 128);
        assert_eq!(denormalize(-3.0), 0);
        assert_eq!(denormalize(7.0), 255);
        assert_eq!(denormalize(f32::NAN), 0);
    }

    #[test]
    fn tile_tensor_round_trip() {
        let mut t = RasterTile::new(64, Rgba::rgb(0, 128, 255)).unwrap();
        t.set(1, 2, [17, 200, 3]);
        let x = tile_to_tensor(&t);
        assert_eq!(x.get(0, 0, 0, 0), -1.0);
        assert_eq!(x.get(0, 2, 0, 0), 1.0);
        assert_eq!(tensor_to_tile(&x).unwrap(), t);
    }

    #[test]
    fn config_checks() {
        TrainConfig::default().validate().unwrap();
        for c in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 4, ..Default::default() },
            TrainConfig { lr: -1.0, ..Default::default() },
            TrainConfig { image_size: 100, ..Default::default() },
            TrainConfig { lambda_cyc: f64::NAN, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let a = TrainConfig::default();
        let b = TrainConfig { seed: 1, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), TrainConfig::default().hash());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "bogus": 1}"#).is_err());
        assert_eq!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3}"#).unwrap().epochs, 3);
    }
}
