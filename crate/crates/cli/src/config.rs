//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cartogan_core::gan::{ModelKind, TrainConfig};
use cartogan_core::geo::{GeoPoint, MAX_ZOOM};
use cartogan_core::imageio::TileFormat;
use cartogan_core::ismap::IsMapConfig;
use cartogan_core::scene::CityParams;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomCount {
    pub zoom: u8,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Ppm,
    Png,
}

impl FormatName {
    pub fn format(self) -> TileFormat {
        match self {
            FormatName::Ppm => TileFormat::Ppm,
            FormatName::Png => TileFormat::Png,
        }
    }
}

/// Relative paths resolve against the config file's directory, or
/// against `--out` when given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub simple: PathBuf,
    pub target: PathBuf,
    pub transfer: PathBuf,
    pub nonmap: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            simple: "tiles/simple".into(),
            target: "tiles/target".into(),
            transfer: "tiles/transfer".into(),
            nonmap: "tiles/nonmap".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_anchor")]
    pub anchor: Anchor,
    #[serde(default)]
    pub city: CityParams,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    #[serde(default = "default_zooms")]
    pub zooms: Vec<ZoomCount>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_format")]
    pub format: FormatName,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub pix2pix: TrainConfig,
    #[serde(default)]
    pub cyclegan: TrainConfig,
    #[serde(default)]
    pub ismap: IsMapConfig,
    /// Procedural non-map images generated next to the map tilesets.
    #[serde(default = "default_nonmap_count")]
    pub nonmap_count: usize,
}

fn default_anchor() -> Anchor {
    Anchor { lat: 43.0731, lon: -89.4012 }
}
fn default_tile_size() -> u32 {
    64
}
fn default_zooms() -> Vec<ZoomCount> {
    vec![ZoomCount { zoom: 15, count: 64 }, ZoomCount { zoom: 18, count: 256 }]
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_nonmap_count() -> usize {
    400
}
fn default_format() -> FormatName {
    FormatName::Ppm
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str(r#"{"version": 1}"#).expect("defaults parse")
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).context("invalid pipeline config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("config version {} unsupported (expected {CONFIG_VERSION})", self.version);
        }
        GeoPoint::new(self.anchor.lat, self.anchor.lon)?;
        self.city.validate()?;
        if self.zooms.is_empty() {
            bail!("at least one zoom level is required");
        }
        for z in &self.zooms {
            if z.zoom > MAX_ZOOM {
                bail!("zoom {} outside [0, {MAX_ZOOM}]", z.zoom);
            }
            if z.count == 0 {
                bail!("tile count for zoom {} must be positive", z.zoom);
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            bail!("test_fraction {} must be in [0, 1)", self.test_fraction);
        }
        for (name, t) in [("pix2pix", &self.pix2pix), ("cyclegan", &self.cyclegan)] {
            t.validate().with_context(|| format!("in {name} section"))?;
            if t.image_size != self.tile_size {
                bail!("{name}.image_size {} differs from tile_size {}", t.image_size, self.tile_size);
            }
        }
        self.ismap.validate()?;
        if self.ismap.image_size != self.tile_size {
            bail!("ismap.image_size {} differs from tile_size {}", self.ismap.image_size, self.tile_size);
        }
        if self.nonmap_count == 0 {
            bail!("nonmap_count must be positive");
        }
        let p = &self.paths;
        let all = [&p.simple, &p.target, &p.transfer, &p.nonmap, &p.checkpoints, &p.reports];
        for (i, a) in all.iter().enumerate() {
            if all[i + 1..].iter().any(|b| a.starts_with(b) || b.starts_with(a)) {
                bail!("paths must be distinct per role; {} overlaps another", a.display());
            }
        }
        Ok(())
    }

    pub fn train_config(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::Pix2Pix => &self.pix2pix,
            ModelKind::CycleGan => &self.cyclegan,
        }
    }

    pub fn zoom_counts(&self) -> Vec<(u8, usize)> {
        self.zooms.iter().map(|z| (z.zoom, z.count)).collect()
    }
}
