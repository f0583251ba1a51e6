//! Command implementations. Each writes human-readable progress to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use cartogan_core::dataset::{
    assign_index_splits, assign_splits, ingest as ingest_tree, pair_entries, plan_tiles, render_tileset, sha256_hex,
    tile_path, write_image_set, DatasetManifest, ManifestEntry, Role, Split, TilesetSpec, MANIFEST_FILE,
};
use cartogan_core::gan::{load_generator, tile_to_tensor, transfer_tile, Checkpoint, ModelKind, TrainData, Trainer};
use cartogan_core::geo::GeoPoint;
use cartogan_core::imageio::{read_tile, write_tile};
use cartogan_core::ismap::{self, format_table, nonmap_set, EvalReport, IsMapClassifier};
use cartogan_core::render::{builtin_simple_sheet, builtin_target_sheet, RasterTile};
use cartogan_core::scene::generate_city;

use crate::config::PipelineConfig;

pub const CLASSIFIER_FILE: &str = "ismap.cgt";

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub base: PathBuf,
    pub threads: usize,
}

/// `pix2pix`, or `pix2pix-z18` when restricted to one zoom.
pub fn model_tag(kind: ModelKind, zoom: Option<u8>) -> String {
    match zoom {
        Some(z) => format!("{}-z{z}", kind.name()),
        None => kind.name().to_string(),
    }
}

impl Ctx {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn role_dir(&self, role: Role) -> PathBuf {
        let p = &self.cfg.paths;
        self.resolve(match role {
            Role::Simple => &p.simple,
            Role::Target => &p.target,
            Role::Transfer => &p.transfer,
            Role::Nonmap => &p.nonmap,
        })
    }

    pub fn transfer_dir(&self, tag: &str) -> PathBuf {
        self.role_dir(Role::Transfer).join(tag)
    }

    pub fn checkpoint_path(&self, tag: &str) -> PathBuf {
        self.resolve(&self.cfg.paths.checkpoints).join(format!("{tag}.cgt"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.checkpoints).join(CLASSIFIER_FILE)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.reports)
    }

    fn load_role(&self, role: Role) -> Result<(PathBuf, DatasetManifest)> {
        let dir = self.role_dir(role);
        load_tileset(&dir, role, "run `cartogan dataset` first")
    }
}

fn load_tileset(dir: &Path, role: Role, hint: &str) -> Result<(PathBuf, DatasetManifest)> {
    let file = dir.join(MANIFEST_FILE);
    if !file.exists() {
        bail!("{} tileset missing: {} not found ({hint})", role.name(), file.display());
    }
    let m = DatasetManifest::load(dir)?;
    if m.role != role {
        bail!("{} lists role {}, expected {}", file.display(), m.role.name(), role.name());
    }
    Ok((dir.to_path_buf(), m))
}

fn require(path: &Path, what: &str, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found: {} ({hint})", path.display());
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn images(dir: &Path, m: &DatasetManifest, entries: &[&ManifestEntry]) -> Result<Vec<RasterTile>> {
    entries
        .iter()
        .map(|e| {
            let t = read_tile(&dir.join(&e.path))?;
            if t.size() != m.tile_size {
                bail!("{} is {}px in a {}px tileset", dir.join(&e.path).display(), t.size(), m.tile_size);
            }
            Ok(t)
        })
        .collect()
}

fn in_zoom(e: &ManifestEntry, zoom: Option<u8>) -> bool {
    zoom.is_none_or(|z| e.tile.is_some_and(|t| t.z() == z))
}

pub fn dataset(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let cfg = &ctx.cfg;
    let anchor = GeoPoint::new(cfg.anchor.lat, cfg.anchor.lon)?;
    let plan = plan_tiles(cfg.seed, anchor, &cfg.zoom_counts())?;
    // Two blocks of slack so roads run past the outermost tiles.
    let scene = generate_city(cfg.seed, plan.region.expand(2.0 * cfg.city.block_size), &cfg.city)?;
    let splits = assign_splits(cfg.seed, &plan.tiles, cfg.test_fraction);
    for (role, sheet) in [(Role::Simple, builtin_simple_sheet()), (Role::Target, builtin_target_sheet())] {
        let spec = TilesetSpec { role, seed: cfg.seed, sheet: &sheet, tile_size: cfg.tile_size, format: cfg.format.format() };
        let dir = ctx.role_dir(role);
        let m = render_tileset(&scene, &plan.tiles, &splits, &spec, &dir, ctx.threads)?;
        writeln!(out, "{}: {} tiles -> {}", role.name(), m.entries.len(), dir.display())?;
    }
    let nonmaps = nonmap_set(cfg.seed, cfg.nonmap_count, cfg.tile_size)?;
    let nsplits = assign_index_splits(cfg.seed, nonmaps.len(), cfg.test_fraction);
    let dir = ctx.role_dir(Role::Nonmap);
    write_image_set(&nonmaps, Role::Nonmap, cfg.seed, &nsplits, &dir)?;
    writeln!(out, "nonmap: {} images -> {}", nonmaps.len(), dir.display())?;
    Ok(())
}

fn train_data(ctx: &Ctx, kind: ModelKind, zoom: Option<u8>) -> Result<TrainData> {
    let (sdir, simple) = ctx.load_role(Role::Simple)?;
    let (tdir, target) = ctx.load_role(Role::Target)?;
    let pairs: Vec<_> = pair_entries(&simple, &target)?
        .into_iter()
        .filter(|(a, _)| a.split == Split::Train && in_zoom(a, zoom))
        .collect();
    if pairs.is_empty() {
        bail!("no training tiles{}", zoom.map_or(String::new(), |z| format!(" at zoom {z}")));
    }
    let xs: Vec<_> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<_> = pairs.iter().map(|p| p.1).collect();
    let to_tensors = |dir: &Path, m: &DatasetManifest, e: &[&ManifestEntry]| -> Result<Vec<_>> {
        Ok(images(dir, m, e)?.iter().map(tile_to_tensor).collect())
    };
    let x = to_tensors(&sdir, &simple, &xs)?;
    let y = to_tensors(&tdir, &target, &ys)?;
    Ok(match kind {
        ModelKind::Pix2Pix => TrainData::Paired { x, y },
        ModelKind::CycleGan => TrainData::Unpaired { x, y },
    })
}

pub fn train(ctx: &Ctx, kind: ModelKind, zoom: Option<u8>, out: &mut dyn Write) -> Result<()> {
    let cfg = ctx.cfg.train_config(kind).clone();
    let data = train_data(ctx, kind, zoom)?;
    let tag = model_tag(kind, zoom);
    let ckpt = ctx.checkpoint_path(&tag);
    let mut trainer = Trainer::new(kind, cfg.clone())?;
    while !trainer.is_done() {
        let e = trainer.run_epoch(&data)?;
        write!(out, "epoch={} loss_g={:.6} loss_d={:.6}", e.epoch, e.loss_g, e.loss_d)?;
        if let Some(c) = e.loss_cyc {
            write!(out, " loss_cyc={c:.6}")?;
        }
        writeln!(out)?;
        if cfg.checkpoint_interval > 0 && e.epoch % cfg.checkpoint_interval == 0 && !trainer.is_done() {
            trainer.to_checkpoint().save(&ckpt)?;
        }
    }
    trainer.to_checkpoint().save(&ckpt)?;
    let csv = ckpt.with_extension("csv");
    write_file(&csv, trainer.history_csv().as_bytes())?;
    writeln!(out, "checkpoint -> {}", ckpt.display())?;
    writeln!(out, "losses -> {}", csv.display())?;
    Ok(())
}

pub fn transfer(ctx: &Ctx, kind: ModelKind, zoom: Option<u8>, out: &mut dyn Write) -> Result<()> {
    let tag = model_tag(kind, zoom);
    let ckpt_path = ctx.checkpoint_path(&tag);
    let hint = format!("run `cartogan train --model {}{}` first", kind.name(), zoom.map_or(String::new(), |z| format!(" --zoom {z}")));
    require(&ckpt_path, "checkpoint", &hint)?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    if ckpt.meta.kind != kind {
        bail!("{} holds a {} model, not {}", ckpt_path.display(), ckpt.meta.kind.name(), kind.name());
    }
    let g = load_generator(&ckpt)?;
    let (sdir, simple) = ctx.load_role(Role::Simple)?;
    let entries: Vec<&ManifestEntry> = simple.entries_in(Some(Split::Test)).filter(|e| in_zoom(e, zoom)).collect();
    let dir = ctx.transfer_dir(&tag);
    let mut m = DatasetManifest::new(Role::Transfer, ctx.cfg.seed, None, simple.tile_size);
    m.zooms = match zoom {
        Some(z) => vec![z],
        None => simple.zooms.clone(),
    };
    let format = ctx.cfg.format.format();
    let chunk = entries.len().div_ceil(ctx.threads).max(1);
    let work = |e: &ManifestEntry| -> Result<ManifestEntry> {
        let tile = read_tile(&sdir.join(&e.path))?;
        let styled = transfer_tile(&g, &tile)?;
        let t = e.tile.context("simple tileset entry without a tile coordinate")?;
        let rel = tile_path(t, format);
        let bytes = write_tile(&dir.join(&rel), &styled)?;
        Ok(ManifestEntry { tile: Some(t), path: rel, sha256: sha256_hex(&bytes), split: Split::Test })
    };
    let results: Vec<Result<Vec<ManifestEntry>>> = std::thread::scope(|s| {
        let handles: Vec<_> = entries.chunks(chunk).map(|part| s.spawn(|| part.iter().map(|e| work(e)).collect())).collect();
        handles.into_iter().map(|h| h.join().expect("transfer worker panicked")).collect()
    });
    for r in results {
        m.entries.extend(r?);
    }
    m.validate()?;
    m.write(&dir)?;
    writeln!(out, "transfer: {} tiles -> {}", m.entries.len(), dir.display())?;
    Ok(())
}

pub fn train_ismap(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let mut maps = Vec::new();
    for role in [Role::Simple, Role::Target] {
        let (dir, m) = ctx.load_role(role)?;
        let train: Vec<_> = m.entries_in(Some(Split::Train)).collect();
        maps.extend(images(&dir, &m, &train)?);
    }
    let (ndir, nm) = ctx.load_role(Role::Nonmap)?;
    let train: Vec<_> = nm.entries_in(Some(Split::Train)).collect();
    let nonmaps = images(&ndir, &nm, &train)?;
    let clf = ismap::train_ismap(&maps, &nonmaps, &ctx.cfg.ismap)?;
    for (i, l) in clf.epoch_losses.iter().enumerate() {
        writeln!(out, "epoch={} loss={l:.6}", i + 1)?;
    }
    writeln!(out, "holdout_accuracy={:.4} ({}/{})", clf.holdout.accuracy, clf.holdout.correct, clf.holdout.count)?;
    let path = ctx.classifier_path();
    clf.save(&path)?;
    writeln!(out, "classifier -> {}", path.display())?;
    Ok(())
}

/// Transfer sets present on disk, sorted by tag.
fn transfer_tags(ctx: &Ctx) -> Result<Vec<String>> {
    let root = ctx.role_dir(Role::Transfer);
    let mut tags = Vec::new();
    if root.is_dir() {
        for item in std::fs::read_dir(&root).with_context(|| format!("listing {}", root.display()))? {
            let item = item?;
            if item.path().join(MANIFEST_FILE).is_file() {
                if let Some(name) = item.file_name().to_str() {
                    tags.push(name.to_string());
                }
            }
        }
    }
    tags.sort();
    Ok(tags)
}

pub fn evaluate(ctx: &Ctx, which: Option<(ModelKind, Option<u8>)>, out: &mut dyn Write) -> Result<()> {
    let clf_path = ctx.classifier_path();
    require(&clf_path, "classifier", "run `cartogan train-ismap` first")?;
    let clf = IsMapClassifier::load(&clf_path)?;
    let tags = match which {
        Some((kind, zoom)) => vec![model_tag(kind, zoom)],
        None => transfer_tags(ctx)?,
    };
    if tags.is_empty() {
        bail!("no transfer tilesets under {} (run `cartogan transfer` first)", ctx.role_dir(Role::Transfer).display());
    }
    let (ndir, nm) = ctx.load_role(Role::Nonmap)?;
    let test: Vec<_> = nm.entries_in(Some(Split::Test)).collect();
    let negatives = images(&ndir, &nm, &test)?;
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for tag in &tags {
        let (dir, m) = load_tileset(&ctx.transfer_dir(tag), Role::Transfer, &format!("run `cartogan transfer` for {tag} first"))?;
        let all: Vec<_> = m.entries.iter().collect();
        let positives = images(&dir, &m, &all)?;
        let r = clf.evaluate(&positives, &negatives).with_context(|| format!("evaluating {tag}"))?;
        write_file(&ctx.reports_dir().join(format!("{tag}.json")), r.to_json().as_bytes())?;
        reports.push((tag.clone(), r));
    }
    let cols: Vec<(&str, &EvalReport)> = reports.iter().map(|(t, r)| (t.as_str(), r)).collect();
    let table = format_table(&cols);
    let name = if which.is_some() { format!("{}.txt", tags[0]) } else { "table.txt".to_string() };
    write_file(&ctx.reports_dir().join(name), table.as_bytes())?;
    write!(out, "{table}")?;
    Ok(())
}

pub fn ingest(dir: &Path, role: Role, seed: u64, test_fraction: f64, out: &mut dyn Write) -> Result<()> {
    if !(0.0..1.0).contains(&test_fraction) {
        bail!("test fraction {test_fraction} must be in [0, 1)");
    }
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let res = ingest_tree(dir, role, seed, test_fraction)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    res.manifest.write(dir)?;
    writeln!(out, "{}: {} tiles, {} skipped -> {}", role.name(), res.manifest.entries.len(), res.warnings.len(), dir.join(MANIFEST_FILE).display())?;
    Ok(())
}
