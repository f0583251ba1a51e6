//! Tilesets on disk: planning which tiles to render, manifests with
//! content hashes and train/test tags, and ingestion of external trees.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{geo_to_tile, tile_bounds, GeoBounds, GeoPoint, TileCoord};
use crate::imageio::{read_tile, write_tile, TileFormat};
use crate::render::{render_tile, RasterTile, StyleSheet};
use crate::rng::{derive, tag};
use crate::scene::VectorScene;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Simple,
    Target,
    Transfer,
    Nonmap,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Simple => "simple",
            Role::Target => "target",
            Role::Transfer => "transfer",
            Role::Nonmap => "nonmap",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Role::Simple),
            "target" => Ok(Role::Target),
            "transfer" => Ok(Role::Transfer),
            "nonmap" => Ok(Role::Nonmap),
            _ => Err(Error::Manifest(format!("unknown role {s:?} (expected simple|target|transfer|nonmap)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Absent for images that are not map tiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileCoord>,
    /// Relative to the tileset root, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub role: Role,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stylesheet: Option<String>,
    pub tile_size: u32,
    pub zooms: Vec<u8>,
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<z>/<x>/<y>.<ext>`.
pub fn tile_path(t: TileCoord, format: TileFormat) -> String {
    format!("{t}.{}", format.extension())
}

/// Inverse of [`tile_path`]; `None` for anything else.
pub fn parse_tile_path(rel: &str) -> Option<(TileCoord, TileFormat)> {
    let (stem, ext) = rel.rsplit_once('.')?;
    let format = match ext {
        "ppm" => TileFormat::Ppm,
        "png" => TileFormat::Png,
        _ => return None,
    };
    Some((stem.parse().ok()?, format))
}

fn safe_relative(path: &str) -> bool {
    !path.is_empty()
        && !path.contains('\\')
        && Path::new(path).components().all(|c| matches!(c, Component::Normal(_)))
}

impl DatasetManifest {
    pub fn new(role: Role, seed: u64, stylesheet: Option<String>, tile_size: u32) -> Self {
        DatasetManifest { version: MANIFEST_VERSION, role, seed, stylesheet, tile_size, zooms: Vec::new(), entries: Vec::new() }
    }

    /// Parse and check structure; file contents are not consulted.
    pub fn parse(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        if self.version != MANIFEST_VERSION {
            return bad(format!("manifest version {} unsupported (expected {MANIFEST_VERSION})", self.version));
        }
        let mut paths = BTreeSet::new();
        let mut tiles = BTreeSet::new();
        for e in &self.entries {
            if !safe_relative(&e.path) {
                return bad(format!("entry path {:?} must be relative and stay inside the tileset", e.path));
            }
            if !paths.insert(e.path.as_str()) {
                return bad(format!("duplicate path {:?}", e.path));
            }
            if e.sha256.len() != 64 || !e.sha256.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                return bad(format!("entry {:?} has a malformed sha256", e.path));
            }
            if let Some(t) = e.tile {
                if !tiles.insert(t) {
                    return bad(format!("tile {t} listed twice"));
                }
                if !self.zooms.contains(&t.z()) {
                    return bad(format!("tile {t} is outside the manifest zooms {:?}", self.zooms));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
        let path = root.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Read `root/manifest.json` and verify every listed file against its hash.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::File { path: path.clone(), reason: format!("cannot read manifest: {e}") })?;
        let m = Self::parse(&text).map_err(|e| Error::File { path: path.clone(), reason: e.to_string() })?;
        for e in &m.entries {
            let file = root.join(&e.path);
            let bytes = std::fs::read(&file).map_err(|err| Error::File { path: file.clone(), reason: err.to_string() })?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(Error::File { path: file, reason: "content hash does not match manifest".into() });
            }
        }
        Ok(m)
    }

    pub fn entries_in(&self, split: Option<Split>) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| split.is_none_or(|s| e.split == s))
    }

    /// Decoded images for the selected split, in manifest order.
    pub fn read_images(&self, root: &Path, split: Option<Split>) -> Result<Vec<RasterTile>> {
        self.entries_in(split)
            .map(|e| {
                let tile = read_tile(&root.join(&e.path))?;
                if tile.size() != self.tile_size {
                    return Err(Error::File {
                        path: root.join(&e.path),
                        reason: format!("{}px tile in a {}px tileset", tile.size(), self.tile_size),
                    });
                }
                Ok(tile)
            })
            .collect()
    }

    pub fn tile_keys(&self) -> BTreeMap<TileCoord, &ManifestEntry> {
        self.entries.iter().filter_map(|e| Some((e.tile?, e))).collect()
    }
}

/// Entries of `a` and `b` matched by tile coordinate. Both manifests must
/// list exactly the same tiles with the same split tags.
pub fn pair_entries<'a>(a: &'a DatasetManifest, b: &'a DatasetManifest) -> Result<Vec<(&'a ManifestEntry, &'a ManifestEntry)>> {
    let (ka, kb) = (a.tile_keys(), b.tile_keys());
    if ka.len() != a.entries.len() || ka.keys().ne(kb.keys()) || kb.len() != b.entries.len() {
        return Err(Error::Dataset(format!(
            "{} and {} tilesets do not list the same tiles",
            a.role.name(),
            b.role.name()
        )));
    }
    ka.into_values()
        .zip(kb.into_values())
        .map(|(x, y)| {
            if x.split != y.split {
                let t = x.tile.expect("keyed entries have tiles");
                return Err(Error::Dataset(format!("tile {t} has different split tags")));
            }
            Ok((x, y))
        })
        .collect()
}

/// Tiles to render per zoom and the extent that contains them.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePlan {
    /// Union of the region's tiles at the coarsest zoom.
    pub region: GeoBounds,
    pub tiles: Vec<TileCoord>,
}

/// Square block of tiles at the coarsest requested zoom, anchored at the
/// tile containing `anchor` and just large enough to hold every request.
/// Each zoom's tiles are a seeded sample of that block.
pub fn plan_tiles(seed: u64, anchor: GeoPoint, counts: &[(u8, usize)]) -> Result<TilePlan> {
    let Some(zmin) = counts.iter().map(|c| c.0).min() else {
        return Err(Error::Params("no zoom levels requested".into()));
    };
    if counts.iter().any(|c| c.1 == 0) {
        return Err(Error::Params("tile counts must be positive".into()));
    }
    let mut zs: Vec<u8> = counts.iter().map(|c| c.0).collect();
    zs.sort_unstable();
    if zs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Params("zoom listed twice".into()));
    }
    let span = counts
        .iter()
        .map(|&(z, n)| {
            let side = (n as f64).sqrt().ceil() as u64;
            side.div_ceil(1u64 << (z - zmin)).max(1)
        })
        .max()
        .expect("non-empty");
    let origin = geo_to_tile(anchor, zmin)?;
    let limit = 1u64 << zmin;
    if origin.x() as u64 + span > limit || origin.y() as u64 + span > limit {
        return Err(Error::Params(format!("a {span}×{span} block at {origin} leaves the world")));
    }
    let last = TileCoord::new(zmin, origin.x() + span as u32 - 1, origin.y() + span as u32 - 1)?;
    let region = tile_bounds(origin).union(&tile_bounds(last));
    let mut tiles = Vec::new();
    for &(z, n) in counts {
        let f = 1u32 << (z - zmin);
        let side = span as u32 * f;
        let mut all: Vec<TileCoord> = (0..side)
            .flat_map(|dy| (0..side).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| TileCoord::new(z, origin.x() * f + dx, origin.y() * f + dy))
            .collect::<Result<_>>()?;
        all.shuffle(&mut derive(seed, &[tag::TILES, z as u64]));
        all.truncate(n);
        tiles.extend(all);
    }
    tiles.sort_unstable();
    Ok(TilePlan { region, tiles })
}

/// Per zoom, a seeded shuffle marks `round(test_fraction · n)` tiles as test.
pub fn assign_splits(seed: u64, tiles: &[TileCoord], test_fraction: f64) -> BTreeMap<TileCoord, Split> {
    let mut by_zoom: BTreeMap<u8, Vec<TileCoord>> = BTreeMap::new();
    for &t in tiles {
        by_zoom.entry(t.z()).or_default().push(t);
    }
    let mut out = BTreeMap::new();
    for (z, mut ts) in by_zoom {
        ts.sort_unstable();
        ts.dedup();
        ts.shuffle(&mut derive(seed, &[tag::SPLIT, z as u64]));
        let k = (test_fraction * ts.len() as f64).round() as usize;
        for (i, t) in ts.into_iter().enumerate() {
            out.insert(t, if i < k { Split::Test } else { Split::Train });
        }
    }
    out
}

/// Split tags for `n` untiled images, drawn like [`assign_splits`] but on
/// a stream of their own.
pub fn assign_index_splits(seed: u64, n: usize, test_fraction: f64) -> Vec<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut derive(seed, &[tag::SPLIT, tag::NONMAP]));
    let k = (test_fraction * n as f64).round() as usize;
    let mut out = vec![Split::Train; n];
    for &i in &idx[..k] {
        out[i] = Split::Test;
    }
    out
}

pub struct TilesetSpec<'a> {
    pub role: Role,
    pub seed: u64,
    pub sheet: &'a StyleSheet,
    pub tile_size: u32,
    pub format: TileFormat,
}

/// Render `tiles` from `scene` under `root` and write its manifest. Tiles
/// render on up to `threads` workers; output does not depend on the count.
pub fn render_tileset(
    scene: &VectorScene,
    tiles: &[TileCoord],
    splits: &BTreeMap<TileCoord, Split>,
    spec: &TilesetSpec,
    root: &Path,
    threads: usize,
) -> Result<DatasetManifest> {
    let mut m = DatasetManifest::new(spec.role, spec.seed, Some(spec.sheet.id.clone()), spec.tile_size);
    let mut zooms: Vec<u8> = tiles.iter().map(|t| t.z()).collect();
    zooms.sort_unstable();
    zooms.dedup();
    m.zooms = zooms;
    let render_one = |t: TileCoord| -> Result<ManifestEntry> {
        let split = *splits.get(&t).ok_or_else(|| Error::Dataset(format!("tile {t} has no split tag")))?;
        let tile = render_tile(scene, t, spec.sheet, spec.tile_size)?;
        let rel = tile_path(t, spec.format);
        let bytes = write_tile(&root.join(&rel), &tile)?;
        Ok(ManifestEntry { tile: Some(t), path: rel, sha256: sha256_hex(&bytes), split })
    };
    let chunk = tiles.len().div_ceil(threads.max(1)).max(1);
    let results: Vec<Result<Vec<ManifestEntry>>> = std::thread::scope(|s| {
        let handles: Vec<_> = tiles
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&t| render_one(t)).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("render worker panicked")).collect()
    });
    for r in results {
        m.entries.extend(r?);
    }
    m.validate()?;
    m.write(root)?;
    Ok(m)
}

/// Write untiled images as `images/<index>.ppm` entries.
pub fn write_image_set(images: &[RasterTile], role: Role, seed: u64, splits: &[Split], root: &Path) -> Result<DatasetManifest> {
    let size = images.first().map_or(0, |t| t.size());
    let mut m = DatasetManifest::new(role, seed, None, size);
    for (i, (img, &split)) in images.iter().zip(splits).enumerate() {
        let rel = format!("images/{i:06}.ppm");
        let bytes = write_tile(&root.join(&rel), img)?;
        m.entries.push(ManifestEntry { tile: None, path: rel, sha256: sha256_hex(&bytes), split });
    }
    m.validate()?;
    m.write(root)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub manifest: DatasetManifest,
    /// One line per rejected file.
    pub warnings: Vec<String>,
}

/// Build a manifest for an existing `z/x/y.<ppm|png>` tree. Unparsable or
/// undecodable files are skipped with a warning.
pub fn ingest(dir: &Path, role: Role, seed: u64, test_fraction: f64) -> Result<Ingested> {
    let mut warnings = Vec::new();
    let mut found: Vec<(TileCoord, String, String, u32)> = Vec::new();
    for item in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let item = item.map_err(|e| Error::File { path: dir.to_path_buf(), reason: e.to_string() })?;
        if !item.file_type().is_file() {
            continue;
        }
        let rel_path = item.path().strip_prefix(dir).expect("walk stays under root");
        let Some(rel) = rel_path.to_str().map(|s| s.replace(std::path::MAIN_SEPARATOR, "/")) else {
            warnings.push(format!("{}: non-UTF-8 name", rel_path.display()));
            continue;
        };
        if rel == MANIFEST_FILE {
            continue;
        }
        let Some((t, _)) = parse_tile_path(&rel) else {
            warnings.push(format!("{rel}: not a z/x/y.ppm or z/x/y.png tile path"));
            continue;
        };
        let bytes = match std::fs::read(item.path()) {
            Ok(b) => b,
            Err(e) => {
                warnings.push(format!("{rel}: {e}"));
                continue;
            }
        };
        match read_tile(item.path()) {
            Ok(tile) => found.push((t, rel, sha256_hex(&bytes), tile.size())),
            Err(e) => warnings.push(format!("{rel}: {e}")),
        }
    }
    let Some(size) = found.first().map(|f| f.3) else {
        return Err(Error::Dataset(format!("no tiles found under {}", dir.display())));
    };
    if let Some(odd) = found.iter().find(|f| f.3 != size) {
        return Err(Error::Dataset(format!("mixed tile sizes: {} is {}px, others {size}px", odd.1, odd.3)));
    }
    let tiles: Vec<TileCoord> = found.iter().map(|f| f.0).collect();
    if let Some(w) = tiles.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Dataset(format!("tile {} present in more than one format", w[0])));
    }
    let splits = assign_splits(seed, &tiles, test_fraction);
    let mut m = DatasetManifest::new(role, seed, None, size);
    let mut zooms: Vec<u8> = tiles.iter().map(|t| t.z()).collect();
    zooms.sort_unstable();
    zooms.dedup();
    m.zooms = zooms;
    found.sort_by_key(|f| f.0);
    m.entries = found
        .into_iter()
        .map(|(t, path, sha256, _)| ManifestEntry { tile: Some(t), path, sha256, split: splits[&t] })
        .collect();
    m.validate()?;
    Ok(Ingested { manifest: m, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_paths_round_trip() {
        let t = TileCoord::new(18, 65970, 96250).unwrap();
        assert_eq!(tile_path(t, TileFormat::Ppm), "18/65970/96250.ppm");
        assert_eq!(parse_tile_path("18/65970/96250.png"), Some((t, TileFormat::Png)));
        for bad in ["18/65970/96250", "18/65970/96250.jpg", "3/9/1.ppm", "../1/0/0.ppm", "a/b/c.ppm"] {
            assert_eq!(parse_tile_path(bad), None, "{bad}");
        }
    }

    #[test]
    fn plan_covers_counts() {
        let anchor = GeoPoint::new(43.0731, -89.4012).unwrap();
        let p = plan_tiles(1, anchor, &[(15, 4), (18, 16)]).unwrap();
        assert_eq!(p.tiles.iter().filter(|t| t.z() == 15).count(), 4);
        assert_eq!(p.tiles.iter().filter(|t| t.z() == 18).count(), 16);
        for t in &p.tiles {
            let b = tile_bounds(*t);
            assert!(p.region.contains(b.center()));
        }
        assert_eq!(p, plan_tiles(1, anchor, &[(15, 4), (18, 16)]).unwrap());
        assert!(plan_tiles(1, anchor, &[(15, 0)]).is_err());
        assert!(plan_tiles(1, anchor, &[]).is_err());
    }

    #[test]
    fn splits_are_per_zoom_fractions() {
        let tiles: Vec<TileCoord> = (0..10).map(|i| TileCoord::new(15, i, 0).unwrap()).chain((0..5).map(|i| TileCoord::new(16, i, 0).unwrap())).collect();
        let s = assign_splits(3, &tiles, 0.2);
        let tests = |z| s.iter().filter(|(t, sp)| t.z() == z && **sp == Split::Test).count();
        assert_eq!((tests(15), tests(16)), (2, 1));
        let mut rev = tiles.clone();
        rev.reverse();
        assert_eq!(assign_splits(3, &rev, 0.2), s);
    }

    #[test]
    fn manifest_validation() {
        let mut m = DatasetManifest::new(Role::Simple, 0, None, 64);
        m.zooms = vec![15];
        let e = ManifestEntry { tile: Some(TileCoord::new(15, 1, 2).unwrap()), path: "15/1/2.ppm".into(), sha256: "0".repeat(64), split: Split::Train };
        m.entries.push(e.clone());
        assert_eq!(DatasetManifest::parse(&m.to_json()).unwrap(), m);
        let mut dup = m.clone();
        dup.entries.push(e.clone());
        assert!(dup.validate().is_err());
        let mut escape = m.clone();
        escape.entries[0].path = "../x.ppm".into();
        assert!(escape.validate().is_err());
        let mut zoom = m.clone();
        zoom.zooms = vec![16];
        assert!(zoom.validate().is_err());
        assert!(DatasetManifest::parse(&m.to_json().replace("\"seed\"", "\"sneed\"")).is_err());
    }
}
